#!/usr/bin/env python3
"""
Insider demo - simulate one path and walk through what an insider who knows L_T can do with it
"""
import time

from mcmarket.cli import configure_logging, resolve_model
from mcmarket.insider import classify_jump
from mcmarket.nflvr import arbitrage_strategy, flvr_scan
from mcmarket.noarb import na_solve
from mcmarket.simulate import simulate_path


def main(model_name, seed=0, n_max=6, n_samples=5000, n_paths=1000):
    print("🔎 Insider demo")
    print(f"🎯 Model: {model_name}, seed {seed}\n")

    start_time = time.time()
    model = resolve_model(model_name)

    na = na_solve(model)
    if na.feasible:
        print(f"✅ (NA) holds for the ordinary agent, λ̃ = {na.override.tilde_lambda.tolist()}\n")
    else:
        print("⚠️  (NA) fails already for the ordinary agent\n")

    path = simulate_path(model, seed=seed)
    ell = path.terminal_log_price
    print(f"🎲 Simulated {path.n_jumps} jumps: {path.scenario().format(model)}")
    print(f"   jump times {[round(float(t), 4) for t in path.jump_times]}")
    print(f"   L_T = {ell.tolist()}\n")

    for k in range(1, path.n_jumps + 1):
        c = classify_jump(model, path, k, ell)
        window = f"[{c.lower:.4f}, {c.upper:.4f}]"
        print(f"   jump {k} at {c.actual_time:.4f}: {c.to_dict(model)['kind']:<20} window {window}")
    print()

    scan_start = time.time()
    print("📦 Scanning for free lunches along the path...")
    report = flvr_scan(model, path, ell, n_max=n_max, n_samples=n_samples, seed=seed)
    scan_time = time.time() - scan_start
    print(f"✅ Scan done in {scan_time:.2f}s")
    print(f"   τ′ = {report.tau_prime}, τ″ = {report.tau_double_prime}, τ^FLVR = {report.tau_flvr}\n")

    for variant, present in (("inaccessible", report.tau_prime is not None), ("accessible", report.tau_double_prime is not None)):
        if not present:
            continue
        result = arbitrage_strategy(model, report, variant, n_paths=n_paths, seed=seed)
        print(f"💰 {variant} arbitrage: ξ = {result.xi.tolist()}, entry {result.entry:.4f}")
        print(f"   mean P&L {result.mean:.5f}, worst {result.worst:.5f}, floor {result.floor:.5f}")
        print(f"   positive on {100 * result.positive_fraction:.1f}% of {result.n_paths} draws\n")
    if not report.arbitrage:
        print("🟢 No free lunch for the insider on this path\n")

    total_time = time.time() - start_time
    print(f"⏱️  Total time: {total_time:.2f}s")


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="mcmarket insider demo")
    parser.add_argument(
        "--model",
        type=str,
        default="twostate_pinned",
        help="Model JSON file or built-in fixture name",
    )
    parser.add_argument("--seed", type=int, default=0, help="Seed for the path and the Monte Carlo draws")
    parser.add_argument("--nmax", type=int, default=6, help="Max further jumps considered by the insider")
    parser.add_argument("--samples", type=int, default=5000, help="Conditional samples per scenario")
    parser.add_argument("--paths", type=int, default=1000, help="Draws for the arbitrage P&L")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args()

    configure_logging(args.verbose)
    main(
        model_name=args.model,
        seed=args.seed,
        n_max=args.nmax,
        n_samples=args.samples,
        n_paths=args.paths,
    )
