"""Command-line interface.

Four subcommands: ``simulate`` (write benchmark CSVs), ``estimate``
(robust value of a fixed policy), ``learn`` (policy-tree learning, with
an optional joint-shift baseline comparison), and ``evaluate``
(test-set metrics, optionally over KL-sphere perturbations).

Every command writes the resolved run configuration beside its outputs
(``<out>.config.json``); re-running with ``--config`` on that file
reproduces the outputs byte for byte.  The environment variable
``DRP_SEED`` overrides ``--seed`` when set.  Exit status is 0 exactly
when all outputs were written; any failure prints a single
machine-parseable ``error: ...`` line on stderr and returns 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .baseline import BaselineConfig, learn_joint_dro
from .bench import (
    empirical_robust_value,
    kl_sphere_perturb,
    simulate_linear_boundary,
    target_policy_rings,
    v_min_metric,
)
from .dataset import (
    read_dataset_csv,
    read_outcome_table_csv,
    write_dataset_csv,
    write_outcome_table_csv,
)
from .estimator import (
    EstimatorConfig,
    estimate_policy_value,
    estimate_policy_value_with_covariate_shift,
)
from .learner import LearnerConfig, _report_from_scores, build_score_matrix, fit_per_action_nuisances
from .nuisance import NuisanceConfig, derive_seed
from .trees import PolicyTree
from .treesearch import search_policy_tree

_CONFIG_SUFFIX = ".config.json"


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_config(out_path, resolved):
    _write_json(str(out_path) + _CONFIG_SUFFIX, resolved)


def _load_policy(spec_str: str):
    if spec_str == "rings":
        return target_policy_rings
    path = Path(spec_str)
    if not path.exists():
        raise ValueError(f"policy file not found: {spec_str}")
    try:
        payload = json.loads(path.read_text())
        return PolicyTree.from_dict(payload)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed policy JSON in {spec_str}: {exc}") from None


def _read_covariates_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"empty covariate file: {path}")
    n_x = sum(1 for c in rows[0] if c.startswith("x"))
    if n_x == 0:
        raise ValueError(f"no x columns in {path}")
    return np.array([[float(v) for v in r[:n_x]] for r in rows[1:]], dtype=np.float64)


def _nuisance_cfg(resolved) -> NuisanceConfig:
    return NuisanceConfig(
        clip_floor=resolved.get("clip_floor", 0.01),
        propensity_kind=resolved.get("propensity_kind", "bagged-trees"),
        regression_kind=resolved.get("regression_kind", "bagged-trees"),
        n_jobs=resolved.get("threads") or 1,
    )


def _cmd_simulate(resolved):
    table_mode = resolved.get("test") or resolved.get("with_potential_outcomes")
    out = resolved["out"]
    data = simulate_linear_boundary(
        resolved["n"], seed=resolved["seed"], with_potential_outcomes=bool(table_mode)
    )
    if table_mode:
        write_outcome_table_csv(data, out)
    else:
        write_dataset_csv(data, out)
    _write_config(out, resolved)
    return [out]


def _cmd_estimate(resolved):
    data = read_dataset_csv(resolved["data"])
    policy = _load_policy(resolved["policy"])
    cfg = EstimatorConfig(
        n_folds=resolved.get("folds", 3),
        seed=resolved["seed"],
        nuisance=_nuisance_cfg(resolved),
    )
    if resolved.get("target_covariates"):
        tgt = _read_covariates_csv(resolved["target_covariates"])
        report = estimate_policy_value_with_covariate_shift(
            data, tgt, policy, resolved["delta"], cfg
        )
    else:
        report = estimate_policy_value(data, policy, resolved["delta"], cfg)
    out = resolved["out"]
    _write_json(out, report.to_dict())
    _write_config(out, resolved)
    return [out]


def _cmd_learn(resolved):
    data = read_dataset_csv(resolved["data"])
    depth = resolved.get("depth", 2)
    cfg = LearnerConfig(
        n_folds=resolved.get("folds", 3),
        seed=resolved["seed"],
        depth=depth,
        nuisance=_nuisance_cfg(resolved),
    )
    bundle = fit_per_action_nuisances(data, resolved["delta"], cfg)
    scores = build_score_matrix(data, bundle, resolved["delta"])
    tree, search_value = search_policy_tree(scores.values, data.x, depth)
    report = _report_from_scores(
        scores,
        tree.predict(data.x),
        float(resolved["delta"]),
        {"in_sample": True, "search_value": search_value, "depth": tree.depth},
    )
    prefix = resolved["out"]
    policy_path = f"{prefix}.policy.json"
    report_path = f"{prefix}.report.json"
    _write_json(policy_path, tree.to_dict())
    payload = report.to_dict()
    outputs = [policy_path, report_path]
    if resolved.get("baseline") == "joint":
        bcfg = BaselineConfig(
            n_folds=cfg.n_folds, seed=cfg.seed, depth=depth, nuisance=cfg.nuisance
        )
        btree = learn_joint_dro(data, resolved["delta"], depth=depth, cfg=bcfg)
        baseline_path = f"{prefix}.baseline_policy.json"
        _write_json(baseline_path, btree.to_dict())
        outputs.append(baseline_path)
        breport = _report_from_scores(
            scores, btree.predict(data.x), float(resolved["delta"]), {"in_sample": True}
        )
        payload["comparison"] = {
            "learned_value": report.estimate,
            "baseline_value": breport.estimate,
            "metric": "cross-fitted robust value on the training scores",
        }
    _write_json(report_path, payload)
    _write_config(prefix, resolved)
    return outputs


def _cmd_evaluate(resolved):
    table = read_outcome_table_csv(resolved["test"])
    policy = _load_policy(resolved["policy"])
    delta = resolved["delta"]
    seed = resolved["seed"]
    v_bar = empirical_robust_value(
        table, policy, delta, cfg=_nuisance_cfg(resolved), seed=seed
    )
    payload = {"v_bar": v_bar, "delta": delta, "n": table.n}
    j = resolved.get("kl_sphere")
    if j:
        if not table.has_distribution_metadata:
            raise ValueError(
                "--kl-sphere requires mu/sigma metadata columns in the test CSV"
            )
        perturbed = [
            kl_sphere_perturb(table, delta, seed=derive_seed(seed, rep)) for rep in range(j)
        ]
        payload["v_min"] = v_min_metric(policy, perturbed)
        payload["kl_sphere_sets"] = j
    out = resolved["out"]
    _write_json(out, payload)
    _write_config(out, resolved)
    return [out]


_HANDLERS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "learn": _cmd_learn,
    "evaluate": _cmd_evaluate,
}

# Per-command option schema: name -> (type, default).  Bool options are
# flags; None defaults mean "required unless supplied via --config".
_SCHEMA = {
    "simulate": {
        "n": (int, None),
        "seed": (int, 0),
        "out": (str, None),
        "test": (bool, False),
        "with_potential_outcomes": (bool, False),
    },
    "estimate": {
        "data": (str, None),
        "policy": (str, None),
        "delta": (float, None),
        "folds": (int, 3),
        "seed": (int, 0),
        "out": (str, None),
        "target_covariates": (str, ""),
        "clip_floor": (float, 0.01),
        "propensity_kind": (str, "bagged-trees"),
        "regression_kind": (str, "bagged-trees"),
        "threads": (int, 0),
    },
    "learn": {
        "data": (str, None),
        "delta": (float, None),
        "depth": (int, 2),
        "folds": (int, 3),
        "seed": (int, 0),
        "out": (str, None),
        "baseline": (str, ""),
        "clip_floor": (float, 0.01),
        "propensity_kind": (str, "bagged-trees"),
        "regression_kind": (str, "bagged-trees"),
        "threads": (int, 0),
    },
    "evaluate": {
        "test": (str, None),
        "policy": (str, None),
        "delta": (float, None),
        "kl_sphere": (int, 0),
        "seed": (int, 0),
        "out": (str, None),
        "clip_floor": (float, 0.01),
        "threads": (int, 0),
    },
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="driftdro",
        description="Robust off-policy evaluation and policy-tree learning "
        "under conditional reward drift.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, schema in _SCHEMA.items():
        p = sub.add_parser(command)
        p.add_argument("--config", type=str, default=None,
                       help="JSON file with a previously emitted run configuration")
        for name, (typ, _default) in schema.items():
            flag = "--" + name.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, action="store_true", default=None)
            else:
                p.add_argument(flag, type=typ, default=None)
    return parser


def _resolve(args) -> dict:
    schema = _SCHEMA[args.command]
    resolved = {"command": args.command}
    from_file = {}
    if args.config:
        with open(args.config) as fh:
            from_file = json.load(fh)
        if from_file.get("command") not in (None, args.command):
            raise ValueError(
                f"config file is for command {from_file.get('command')!r}, "
                f"not {args.command!r}"
            )
    for name, (typ, default) in schema.items():
        explicit = getattr(args, name)
        if explicit is not None:
            value = explicit
        elif name in from_file:
            value = from_file[name]
        else:
            value = default
        if value is None:
            raise ValueError(f"missing required option --{name.replace('_', '-')}")
        resolved[name] = typ(value)
    if "seed" in resolved and os.environ.get("DRP_SEED"):
        resolved["seed"] = int(os.environ["DRP_SEED"])
    return resolved


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        resolved = _resolve(args)
        _HANDLERS[resolved["command"]](resolved)
    except BrokenPipeError:
        raise
    except Exception as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
