"""Reproducible desk-scale experiments behind the CLI.

Every command resolves a flat key-value config (file values, then CLI
overrides, then defaults), derives all randomness from the single config
seed, and stamps each report row with a hash of the resolved config so
reruns are byte-identical and attributable.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from .data import (
    Dataset,
    FeaturizerConfig,
    derive_seed,
    featurize_text,
    generate_switching,
    load_tsv,
    read_keyvalue,
    rng_from_seed,
    switching_spec_from_kv,
)
from .dsl import read_rule_log
from .ensemble import (
    FeedbackEnsemble,
    MixtureClassifier,
    SimilarityConfig,
    mixture_predict_batch,
    train_mixture,
)
from .models import TrainConfig, train_logistic
from .simulation import (
    DEFAULT_BOOTSTRAP_RESAMPLES,
    LoopConfig,
    LoopResult,
    MetricsReport,
    alpha_sweep,
    bootstrap_se,
    build_experts,
    make_expert_pool,
    predicted_classes,
    run_lifelong_loop,
    select_observable,
)


class ConfigError(ValueError):
    """Bad experiment configuration; the CLI maps this to exit code 2."""


_COMMON_DEFAULTS = {
    "seed": "0",
    "alpha": "0.5",
    "hist_frozen": "true",
    "policy": "misclassified",
    "routing": "round-robin",
    "learning_rate": "0.1",
    "epochs": "200",
    "batch_size": "32",
    "l2": "1e-4",
    "n_per_cluster": "100",
    "n_experts": "40",
    "expert_counts": "1,5,10,20,30,40,50",
    "alphas": ",".join(str(i / 20) for i in range(21)),
    "dimension": "16384",
    "n_boot": str(DEFAULT_BOOTSTRAP_RESAMPLES),
}


def resolve_config(
    config_path: str | Path | None,
    seed: int | None = None,
    alpha: float | None = None,
) -> dict[str, str]:
    resolved = dict(_COMMON_DEFAULTS)
    if config_path is not None:
        try:
            resolved.update(read_keyvalue(config_path))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from None
    if seed is not None:
        resolved["seed"] = str(seed)
    if alpha is not None:
        resolved["alpha"] = str(alpha)
    return resolved


def config_hash(resolved: dict[str, str]) -> str:
    canonical = "".join(f"{k}={resolved[k]}\n" for k in sorted(resolved))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _bool(cfg: dict[str, str], key: str) -> bool:
    value = cfg[key].strip().lower()
    if value in ("true", "1", "yes"):
        return True
    if value in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key} must be a boolean, got {cfg[key]!r}")


def _int(cfg: dict[str, str], key: str) -> int:
    try:
        return int(cfg[key])
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {cfg[key]!r}") from None


def _float(cfg: dict[str, str], key: str) -> float:
    try:
        return float(cfg[key])
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {cfg[key]!r}") from None


def _train_config(cfg: dict[str, str], seed: int) -> TrainConfig:
    try:
        return TrainConfig(
            learning_rate=_float(cfg, "learning_rate"),
            epochs=_int(cfg, "epochs"),
            batch_size=_int(cfg, "batch_size"),
            l2=_float(cfg, "l2"),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _loop_config(cfg: dict[str, str], mode: str, seed: int) -> LoopConfig:
    try:
        return LoopConfig(
            alpha=_float(cfg, "alpha"),
            hist_frozen=_bool(cfg, "hist_frozen"),
            policy=cfg["policy"],
            routing=cfg["routing"],
            feedback_mode=mode,
            train=_train_config(cfg, derive_seed(seed, 3)),
            seed=seed,
            n_boot=_int(cfg, "n_boot"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


_METRIC_COLUMNS = [
    "accuracy_train_distr",
    "se_train_distr",
    "accuracy_test_distr",
    "se_test_distr",
    "accuracy_combined",
    "se_combined",
]


def _metric_cells(report: MetricsReport) -> list:
    return [
        report.accuracy_train_distr,
        report.se_train_distr,
        report.accuracy_test_distr,
        report.se_test_distr,
        report.accuracy_combined,
        report.se_combined,
    ]


def run_synthetic_conditions(
    cfg: dict[str, str], seed: int, modes: tuple[str, ...] = ("rules", "labels", "none")
) -> dict[str, LoopResult]:
    """One loop round per feedback condition on the switching data."""
    spec = switching_spec_from_kv({**cfg, "seed": str(derive_seed(seed, 0))})
    train, test = generate_switching(spec)
    hist = train_logistic(train, _train_config(cfg, derive_seed(seed, 1)))
    pool = make_expert_pool(train, test)
    results: dict[str, LoopResult] = {}
    for mode in modes:
        experts = []
        if mode == "rules":
            experts = build_experts(_int(cfg, "n_experts"), derive_seed(seed, 2), pool)
        loop_cfg = _loop_config(cfg, mode, derive_seed(seed, 4))
        results[mode] = run_lifelong_loop(hist, experts, [test], train, test, loop_cfg)
    return results


def cmd_synthetic(cfg: dict[str, str], out_dir: str | Path) -> dict[str, LoopResult]:
    out = Path(out_dir)
    seed = _int(cfg, "seed")
    chash = config_hash(cfg)
    results = run_synthetic_conditions(cfg, seed)
    names = {"rules": "decision-rules", "labels": "labels", "none": "none"}
    rows = []
    payload = {}
    for mode in ("rules", "labels", "none"):
        report = results[mode].reports[-1]
        rows.append([names[mode], report.alpha, report.n_feedback, *_metric_cells(report), chash])
        payload[names[mode]] = [r.to_dict() for r in results[mode].reports]
    _write_csv(
        out / "table1.csv",
        ["feedback", "alpha", "n_feedback", *_METRIC_COLUMNS, "config_hash"],
        rows,
    )
    _write_json(out / "table1_metrics.json", {"config_hash": chash, "conditions": payload})
    return results


def cmd_scaling(cfg: dict[str, str], out_dir: str | Path) -> dict[int, dict[str, LoopResult]]:
    out = Path(out_dir)
    seed = _int(cfg, "seed")
    chash = config_hash(cfg)
    try:
        counts = [int(c) for c in cfg["expert_counts"].split(",") if c.strip()]
    except ValueError:
        raise ConfigError(f"expert_counts must be integers, got {cfg['expert_counts']!r}") from None
    rows = []
    payload = {}
    all_results: dict[int, dict[str, LoopResult]] = {}
    for cell, n_experts in enumerate(counts):
        cell_cfg = {**cfg, "n_experts": str(n_experts)}
        results = run_synthetic_conditions(cell_cfg, derive_seed(seed, 100, cell))
        all_results[n_experts] = results
        rule = results["rules"].reports[-1]
        label = results["labels"].reports[-1]
        rows.append([
            n_experts,
            rule.n_feedback,
            rule.accuracy_train_distr,
            rule.accuracy_test_distr,
            rule.accuracy_combined,
            label.n_feedback,
            label.accuracy_train_distr,
            label.accuracy_test_distr,
            label.accuracy_combined,
            chash,
        ])
        payload[str(n_experts)] = {
            "rules": [r.to_dict() for r in results["rules"].reports],
            "labels": [r.to_dict() for r in results["labels"].reports],
        }
    _write_csv(
        out / "table2.csv",
        [
            "n_experts",
            "n_feedback_rules",
            "rule_train_distr",
            "rule_test_distr",
            "rule_combined",
            "n_feedback_labels",
            "label_train_distr",
            "label_test_distr",
            "label_combined",
            "config_hash",
        ],
        rows,
    )
    _write_json(out / "table2_metrics.json", {"config_hash": chash, "cells": payload})
    return all_results


def _alpha_grid(cfg: dict[str, str]) -> list[float]:
    try:
        alphas = [float(a) for a in cfg["alphas"].split(",") if a.strip()]
    except ValueError:
        raise ConfigError(f"alphas must be numbers, got {cfg['alphas']!r}") from None
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        raise ConfigError("alphas must lie in [0, 1]")
    return alphas


def cmd_sweep(cfg: dict[str, str], out_dir: str | Path) -> list[MetricsReport]:
    """Alpha sweep on the synthetic task: collect rules once, retrain the
    rule weights per alpha, and report each mixture's metrics."""
    out = Path(out_dir)
    seed = _int(cfg, "seed")
    chash = config_hash(cfg)
    results = run_synthetic_conditions(cfg, seed, modes=("rules",))
    loop = results["rules"]
    spec = switching_spec_from_kv({**cfg, "seed": str(derive_seed(seed, 0))})
    train, test = generate_switching(spec)
    hist = train_logistic(train, _train_config(cfg, derive_seed(seed, 1)))
    fresh = replace(loop.mixture.feedback, weights=np.ones(len(loop.mixture.feedback)))
    feedback_data = Dataset(samples=tuple(loop.feedback_samples), dimension=train.dimension)
    reports = alpha_sweep(
        hist,
        fresh,
        feedback_data,
        train,
        test,
        _alpha_grid(cfg),
        hist_frozen=_bool(cfg, "hist_frozen"),
        train=_train_config(cfg, derive_seed(seed, 5)),
        n_feedback=loop.n_feedback,
        bootstrap_seed=derive_seed(seed, 6),
        n_boot=_int(cfg, "n_boot"),
    )
    rows = [
        [r.alpha, r.n_feedback, *_metric_cells(r), chash]
        for r in reports
    ]
    _write_csv(
        out / "alpha_sweep.csv",
        ["alpha", "n_feedback", *_METRIC_COLUMNS, "config_hash"],
        rows,
    )
    _write_json(
        out / "alpha_sweep_metrics.json",
        {"config_hash": chash, "reports": [r.to_dict() for r in reports]},
    )
    return reports


def bundled_asset(name: str) -> Path:
    return Path(resources.files("rulecast").joinpath("assets", name))


def _sentiment_paths(cfg: dict[str, str]) -> tuple[Path, dict[str, Path], Path]:
    source = Path(cfg["source_path"]) if "source_path" in cfg else bundled_asset("reviews_source.tsv")
    rules = Path(cfg["rules_path"]) if "rules_path" in cfg else bundled_asset("phrase_rules.rules")
    topics: dict[str, Path] = {}
    if "topics" in cfg:
        for item in cfg["topics"].split(","):
            item = item.strip()
            if not item:
                continue
            if "=" not in item:
                raise ConfigError(f"topics entries must be name=path, got {item!r}")
            name, path = item.split("=", 1)
            topics[name.strip()] = Path(path.strip())
    else:
        topics = {
            "kitchen": bundled_asset("reviews_kitchen.tsv"),
            "electronics": bundled_asset("reviews_electronics.tsv"),
        }
    for p in [source, rules, *topics.values()]:
        if not p.exists():
            raise ConfigError(f"missing input file: {p}")
    return source, topics, rules


def run_sentiment_topic(
    source_model,
    topic_corpus: Dataset,
    rules,
    cfg: dict[str, str],
    seed: int,
) -> dict[str, list[tuple[float, float, float]]]:
    """Four (alpha, accuracy, se) curves for one topic.

    The topic corpus is split in half: the feedback half supplies the
    misclassified samples whose labels train the rule weights and the
    label-feedback baseline; the in-domain model trains on the whole
    feedback half; everything is scored on the held-out eval half.
    """
    n = len(topic_corpus)
    rng = rng_from_seed(derive_seed(seed, 21))
    order = rng.permutation(n)
    half = n // 2
    feedback_half = Dataset.from_samples(
        (topic_corpus.samples[i] for i in order[:half]), "external"
    )
    eval_half = Dataset.from_samples(
        (topic_corpus.samples[i] for i in order[half:]), "external"
    )
    train_cfg = _train_config(cfg, derive_seed(seed, 22))
    n_boot = _int(cfg, "n_boot")
    alphas = _alpha_grid(cfg)

    probs = mixture_predict_batch(
        MixtureClassifier(1.0, source_model, FeedbackEnsemble.empty()), feedback_half.samples
    )
    wrong_ids = select_observable(feedback_half, probs, "misclassified")
    wrong = Dataset.from_samples(
        (s for s in feedback_half.samples if s.id in set(wrong_ids)), "external"
    )

    in_domain_model = train_logistic(feedback_half, train_cfg)
    if len(wrong) and len(set(s.label for s in wrong.samples)) >= 2:
        labels_model = train_logistic(wrong, train_cfg)
    else:
        labels_model = source_model  # too little signal to retrain on

    eval_y = eval_half.label_vector()

    def flat_curve(model) -> list[tuple[float, float, float]]:
        m = MixtureClassifier(1.0, model, FeedbackEnsemble.empty())
        correct = (predicted_classes(mixture_predict_batch(m, eval_half.samples)) == eval_y)
        acc = float(np.mean(correct))
        se_rng = rng_from_seed(derive_seed(seed, 23))
        se = bootstrap_se(correct.astype(np.float64), se_rng, n_boot)
        return [(a, acc, se) for a in alphas]

    curves = {
        "source": flat_curve(source_model),
        "in-domain": flat_curve(in_domain_model),
        "labels-feedback": flat_curve(labels_model),
    }

    ensemble = FeedbackEnsemble(
        rules=tuple(rules),
        weights=np.ones(len(rules)),
        similarity=SimilarityConfig.constant(),
        anchors=(None,) * len(rules),
    )
    rule_curve = []
    for i, alpha in enumerate(alphas):
        m = MixtureClassifier(alpha, source_model, ensemble, hist_frozen=True)
        if len(wrong):
            m = train_mixture(m, wrong, train_cfg)
        correct = (predicted_classes(mixture_predict_batch(m, eval_half.samples)) == eval_y)
        se_rng = rng_from_seed(derive_seed(seed, 24, i))
        rule_curve.append(
            (alpha, float(np.mean(correct)), bootstrap_se(correct.astype(np.float64), se_rng, n_boot))
        )
    curves["rule-feedback"] = rule_curve
    curves["_n_feedback"] = [(0.0, float(len(wrong)), 0.0)]
    return curves


def cmd_sentiment(cfg: dict[str, str], out_dir: str | Path) -> dict[str, dict]:
    out = Path(out_dir)
    seed = _int(cfg, "seed")
    chash = config_hash(cfg)
    source_path, topic_paths, rules_path = _sentiment_paths(cfg)
    feat_cfg = FeaturizerConfig(dimension=_int(cfg, "dimension"))
    source = featurize_text(load_tsv(source_path), feat_cfg)
    source_model = train_logistic(source, _train_config(cfg, derive_seed(seed, 20)))
    rules = read_rule_log(rules_path)
    summaries: dict[str, dict] = {}
    for t_index, (topic, path) in enumerate(sorted(topic_paths.items())):
        corpus = featurize_text(load_tsv(path), feat_cfg)
        curves = run_sentiment_topic(
            source_model, corpus, rules, cfg, derive_seed(seed, 30, t_index)
        )
        n_feedback = int(curves.pop("_n_feedback")[0][1])
        rows = []
        for method in ("source", "in-domain", "labels-feedback", "rule-feedback"):
            for alpha, acc, se in curves[method]:
                rows.append([topic, method, alpha, acc, se, n_feedback, chash])
        _write_csv(
            out / f"sentiment_{topic}.csv",
            ["topic", "method", "alpha", "accuracy", "se", "n_feedback", "config_hash"],
            rows,
        )
        summaries[topic] = {
            "n_feedback": n_feedback,
            "curves": {m: [list(point) for point in c] for m, c in curves.items()},
        }
    _write_json(out / "sentiment_metrics.json", {"config_hash": chash, "topics": summaries})
    return summaries
