"""Quick-look runs of the Monte Carlo verification experiments.

Uses reduced trial counts; the acceptance suite (tests/test_acceptance.py)
runs the full budgets.  Each experiment prints its asserted bounds and the
regime they were checked in.

Run: python demos/demo_monte_carlo_checks.py
"""

from sigtrace.harness import DEFAULT_CONFIGS, ExperimentConfig, run_experiment

QUICK = {
    "exit-probability": dict(trials=20_000, epsilon=0.1, phi=0.001, mode="disk"),
    "excursion-bound": dict(trials=5_000, epsilon=0.25, level=12),
    "coincidence": dict(trials=400, epsilon=0.2, level=12),
    "eta-nonzero": dict(trials=1_500, epsilon=0.25, level=12),
    "area-density": dict(trials=1_500, epsilon=0.25, level=12),
    "identities": dict(trials=15, level=7),
    "reconstruction": dict(trials=10, level=13, epsilon=0.2, eps_sweep=(0.4, 0.2)),
}

for name, overrides in QUICK.items():
    cfg = ExperimentConfig(experiment=name, **{**DEFAULT_CONFIGS[name], **overrides})
    report = run_experiment(name, cfg)
    print(f"\n=== {name}  [{report.status}]  "
          f"({report.timing['wall_clock_s']:.1f}s, {cfg.trials} trials)")
    for b in report.bounds:
        flag = "ok " if b["passed"] else "FAIL"
        print(f"  [{flag}] {b['name']} ({b['regime']}): estimate {b['estimate']} vs bound {b['bound']}")
    for key in ("p_hat", "harmonic_value", "coincidence_freq", "beta_prime_recomputed",
                "beta_tight_regime", "conditioning_events", "eta_scale_median"):
        if key in report.aggregates:
            print(f"      {key} = {report.aggregates[key]}")
