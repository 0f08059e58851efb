"""Dev probe: multi-seed Table-2-style experiment (not part of the package)."""
import sys, time
import numpy as np
import driftdro as dd

seeds = list(range(1, 11))
deltas = [0.05, 0.1, 0.2]
t0 = time.time()
results = {}
for delta in deltas:
    ln_vals, b_vals = [], []
    for seed in seeds:
        train = dd.simulate_linear_boundary(7500, seed=seed)
        test = dd.simulate_linear_boundary(10000, seed=10000 + seed, with_potential_outcomes=True)
        tree, _ = dd.learn(train, delta, dd.LearnerConfig(seed=seed))
        btree = dd.learn_joint_dro(train, delta, depth=2, cfg=dd.BaselineConfig(seed=seed))
        v_ln = dd.empirical_robust_value(test, tree, delta, seed=seed)
        v_b = dd.empirical_robust_value(test, btree, delta, seed=seed)
        ln_vals.append(v_ln); b_vals.append(v_b)
        print(f"delta={delta} seed={seed}: LN={v_ln:.4f} joint={v_b:.4f} ({time.time()-t0:.0f}s)", flush=True)
    results[delta] = (np.mean(ln_vals), np.mean(b_vals))
    print(f"== delta={delta}: mean LN={np.mean(ln_vals):.4f} mean joint={np.mean(b_vals):.4f} gap={np.mean(ln_vals)-np.mean(b_vals):.4f}", flush=True)
print("total", time.time() - t0)
for d, (a, b) in results.items():
    print(d, a, b, a - b)
