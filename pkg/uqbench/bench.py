"""Benchmark commands and the logging bootstrap.

Each ``cmd_*`` function takes a resolved BenchConfig, writes into its own
directory under ``cfg.output_dir`` and returns a summary dict:

    {'response': 'Generate Complete', 'directory': ..., 'artifacts': [...], 'skipped': [...]}

A directory whose ``config.json`` matches the current config and already holds
every output is skipped with a notice unless ``force`` is set. The config is
written last, so an interrupted run never looks complete.
"""
import logging
import os
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from .tools import evalkit, label_uq, reproduce, seg_entropy
from .tools.biomass_sim import load_dataset, save_dataset
from .tools.ref_oracle import lookup, load_table, oracle_agreement, reference_table, save_table
from .tools.uq_methods import predict_batch, train_regressor
from .tools.utils import artifacts, plots, tinynet
from .tools.utils.bench_config import BenchConfig, get_log_level
from .tools.utils.errors import ConfigurationError
from .tools.utils.randkit import SeedBundle
from .tools.utils.table_schema import SCENE_COLUMNS, TABLE2_COLUMNS, TABLE4_COLUMNS, ordered

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s: %(message)s"


def configure_logging(level: Optional[str] = None) -> None:
    """Configure the root logger once; library modules only create loggers."""
    logging.basicConfig(level=getattr(logging, (level or get_log_level()).upper(), logging.INFO),
                        format=LOG_FORMAT)


def alpha_dirname(alpha: float, size_multiplier: int = 1) -> str:
    name = f"alpha_{alpha:.2f}"
    return name if size_multiplier == 1 else f"{name}_x{size_multiplier}"


def _skip(directory: str, cfg: BenchConfig, outputs: List[str], force: bool) -> bool:
    if force:
        artifacts.clear_directory(directory)
        return False
    if artifacts.is_cached(directory, cfg, outputs):
        logger.info(f"⚠️ Skipping {directory}: outputs exist for an identical config (use --force)")
        return True
    return False


def _summary(name: str, directory: str, produced: List[str], skipped: List[str], **extra) -> Dict:
    return {'response': f'{name} Complete', 'directory': directory,
            'artifacts': produced, 'skipped': skipped, **extra}


def _dataset_jobs(cfg: BenchConfig) -> List[tuple]:
    reg = cfg.regression
    jobs = [(a, 1) for a in reg.alphas]
    jobs += [(reg.size_study_alpha, m) for m in reg.size_multipliers if m != 1]
    if reg.size_study_alpha not in reg.alphas and 1 in reg.size_multipliers:
        jobs.append((reg.size_study_alpha, 1))
    return jobs


def cmd_generate(cfg: BenchConfig, force: bool = False) -> Dict:
    """Write the benchmark data of the configured track."""
    root = os.path.join(cfg.output_dir, "datasets")
    produced, skipped = [], []
    bundle = SeedBundle(cfg.seed)
    if cfg.track == "regression":
        for alpha, mult in _dataset_jobs(cfg):
            directory = os.path.join(root, alpha_dirname(alpha, mult))
            if _skip(directory, cfg, ["dataset.csv", "dataset.json"], force):
                skipped.append(directory)
                continue
            # size-study sets draw from their own streams so the x1 test points stay unseen
            ds = reproduce.dataset_for(cfg, alpha, bundle if mult == 1 else bundle.child(f"size.{mult}"), mult)
            produced += list(save_dataset(ds, directory).values())
            artifacts.write_config(directory, cfg)
    elif cfg.track == "segmentation":
        directory = os.path.join(root, "segmentation")
        settings = cfg.segmentation
        names = [f"scene_train_{i}.csv" for i in range(settings.train_scenes)]
        names += [f"scene_test_{i}.csv" for i in range(settings.test_scenes)]
        if _skip(directory, cfg, names, force):
            skipped.append(directory)
        else:
            train, test = seg_entropy.study_scenes(settings, bundle.child("segmentation"))
            for name, scene in zip(names, train + test):
                rows, cols = np.indices(scene.shape)
                frame = pd.DataFrame({"row": rows.ravel(), "col": cols.ravel(),
                                      "pixel": scene.pixels.ravel(), "mask": scene.mask.ravel()},
                                     columns=list(SCENE_COLUMNS))
                produced.append(artifacts.write_csv(frame, os.path.join(directory, name)))
            artifacts.write_config(directory, cfg)
    else:
        cls = cfg.classification
        for run_seed in cls.seeds:
            directory = os.path.join(root, "classification", f"seed_{run_seed}")
            if _skip(directory, cfg, [label_uq.VOTES_CSV, label_uq.FEATURES_CSV], force):
                skipped.append(directory)
                continue
            corpus = label_uq.synth_ambiguous_corpus(
                cls.k_classes, cls.n_items, cls.feature_dim, cls.votes, cls.diagonal,
                bundle.child("classification").child(f"seed.{run_seed}"))
            produced += list(label_uq.save_corpus(corpus, directory).values())
            artifacts.write_config(directory, cfg)
    logger.info(f"✅ generate: {len(produced)} files written, {len(skipped)} directories skipped")
    return _summary("Generate", root, produced, skipped, track=cfg.track)


def cmd_reference(cfg: BenchConfig, force: bool = False) -> Dict:
    """Raw and smoothed reference sigma tables, one directory per noise level."""
    if cfg.track != "regression":
        raise ConfigurationError("reference is only defined for the regression track")
    root = os.path.join(cfg.output_dir, "reference")
    produced, skipped, agreement = [], [], {}
    bundle = SeedBundle(cfg.seed)
    alphas = list(dict.fromkeys(list(cfg.regression.alphas) + [cfg.regression.size_study_alpha]))
    for alpha in alphas:
        directory = os.path.join(root, alpha_dirname(alpha))
        if _skip(directory, cfg, ["reference.csv", "reference.json"], force):
            skipped.append(directory)
            continue
        table = reference_table(alpha, cfg.resolved_oracle(), bundle.child(f"oracle.{alpha}"))
        produced += list(save_table(table, directory).values())
        if alpha > 0:
            agreement[alpha_dirname(alpha)] = {"raw": oracle_agreement(table),
                                               "smoothed": oracle_agreement(table, smoothed=True)}
            produced.append(artifacts.write_json(agreement[alpha_dirname(alpha)],
                                                 os.path.join(directory, "agreement.json")))
        artifacts.write_config(directory, cfg)
    logger.info(f"✅ reference: {len(alphas) - len(skipped)} tables computed")
    return _summary("Reference", root, produced, skipped, agreement=agreement)


def _load_inputs(cfg: BenchConfig, alpha: float, size_multiplier: int = 1):
    ds_dir = os.path.join(cfg.output_dir, "datasets", alpha_dirname(alpha, size_multiplier))
    ref_dir = os.path.join(cfg.output_dir, "reference", alpha_dirname(alpha))
    artifacts.require(os.path.join(ds_dir, "dataset.csv"), "run `generate` first")
    artifacts.require(os.path.join(ref_dir, "reference.csv"), "run `reference` first")
    return load_dataset(ds_dir), load_table(ref_dir)


def _train_eval_job(args) -> Dict:
    cfg, method, alpha, mult, directory = args
    bundle = SeedBundle(cfg.seed)
    if mult == 1:
        dataset, table = _load_inputs(cfg, alpha)
        train_set, test = dataset, dataset.test()
        train_seed = bundle.child(f"train.{alpha}")
    else:
        train_set, table = _load_inputs(cfg, alpha, mult)
        test = _load_inputs(cfg, alpha)[0].test()
        train_seed = bundle.child(f"train.x{mult}")
    model = train_regressor(train_set, cfg.net, method, train_seed)
    preds = predict_batch(model, method, test, cfg.regression.t_samples, bundle.child(f"predict.{alpha}"))
    sigma_ref = lookup(table, preds["d"].to_numpy(), preds["h"].to_numpy())
    report = {
        "method": method, "alpha": alpha, "size_multiplier": mult,
        "b": evalkit.evaluate(preds["b_hat"], preds["b_true"]).to_dict(),
        "sigma": evalkit.evaluate(preds["sigma_a"], sigma_ref).to_dict() if np.any(sigma_ref > 0) else None,
    }
    artifacts.write_csv(preds, os.path.join(directory, "predictions.csv"))
    artifacts.write_json(report, os.path.join(directory, "report.json"))
    tinynet.save_model(model, os.path.join(directory, "model.json"))
    row = reproduce.score_predictions(preds, table, method)
    row.update(alpha=alpha, size_multiplier=mult)
    return {"row": row, "sigma_a": preds["sigma_a"].to_numpy(), "sigma_ref": sigma_ref}


def cmd_train_eval(cfg: BenchConfig, table: str = "2", force: bool = False) -> Dict:
    """Train and score the configured methods on saved datasets and reference tables."""
    if table not in ("2", "4"):
        raise ConfigurationError(f"train-eval supports --table 2 or 4, got {table}")
    reg = cfg.regression
    root = os.path.join(cfg.output_dir, "train_eval", f"table{table}")
    out_name = f"table{table}.csv"
    if _skip(root, cfg, [out_name], force):
        return _summary("Train-Eval", root, [], [root])

    if table == "2":
        jobs = [(cfg, m, a, 1, os.path.join(root, m, alpha_dirname(a))) for m in reg.methods for a in reg.alphas]
    else:
        jobs = [(cfg, m, reg.size_study_alpha, mult, os.path.join(root, m, f"x{mult}"))
                for m in reg.methods for mult in reg.size_multipliers]
    results = reproduce._run_jobs(_train_eval_job, jobs, cfg.workers)
    columns = TABLE2_COLUMNS if table == "2" else TABLE4_COLUMNS
    frame = ordered(pd.DataFrame([r["row"] for r in results]), columns)
    produced = [artifacts.write_csv(frame, os.path.join(root, out_name))]

    if table == "2":
        for method in reg.methods:
            picked = [r for job, r in zip(jobs, results) if job[1] == method]
            if len(picked) < 2:
                continue
            corr = evalkit.uncertainty_correlation(np.vstack([r["sigma_a"] for r in picked]),
                                                   np.vstack([r["sigma_ref"] for r in picked]))
            produced += _correlation_outputs(corr, method, root)
    artifacts.write_config(root, cfg)
    logger.info(f"✅ train-eval table {table}: {len(frame)} rows")
    return _summary("Train-Eval", root, produced, [], rows=len(frame))


def _correlation_outputs(corr: evalkit.CorrelationResult, method: str, directory: str) -> List[str]:
    hist = evalkit.histogram_table(corr.coefficients, bins=40, value_range=(-1.0, 1.0))
    csv_path = artifacts.write_csv(hist, os.path.join(directory, f"correlation_{method}.csv"))
    svg_path = plots.histogram_svg(hist, os.path.join(directory, f"correlation_{method}.svg"),
                                   title=f"{method}: per-point correlation", xlabel="Pearson r")
    json_path = artifacts.write_json({
        "method": method, "p10": corr.p10, "share_above_0.9": corr.share_above(0.9),
        "skipped_points": int(corr.skipped.size),
        "quantiles": evalkit.correlation_quantiles(corr.coefficients) if corr.coefficients.size else [],
    }, os.path.join(directory, f"correlation_{method}.json"))
    return [csv_path, svg_path, json_path]


def _segmenter(cfg: BenchConfig, root: str, force: bool) -> tinynet.MlpModel:
    directory = os.path.join(root, "segmenter")
    path = os.path.join(directory, "segmenter.json")
    if not force and artifacts.is_cached(directory, cfg, ["segmenter.json"]):
        logger.info("⚠️ Reusing cached baseline segmenter")
        return tinynet.load_model(path)
    bundle = SeedBundle(cfg.seed).child("segmentation")
    train, _ = seg_entropy.study_scenes(cfg.segmentation, bundle)
    model = seg_entropy.train_segmenter(train, cfg.segmentation, bundle)
    tinynet.save_model(model, path)
    artifacts.write_config(directory, cfg)
    return model


def cmd_entropy(cfg: BenchConfig, force: bool = False) -> Dict:
    """Segmentation entropy study with per-level table, quality table and example fields."""
    settings = cfg.segmentation
    root = os.path.join(cfg.output_dir, "entropy")
    if _skip(root, cfg, ["table5.csv", "table7.csv"], force):
        return _summary("Entropy", root, [], [root])
    baseline = _segmenter(cfg, root, force=False)
    bundle = SeedBundle(cfg.seed).child("segmentation")
    table5, summary = seg_entropy.run_entropy_study(settings, bundle, baseline=baseline)
    table7 = seg_entropy.segmentation_quality(table5)
    summary["reference_increasing"] = reproduce.entropy_trend(table5)
    produced = [artifacts.write_csv(table5, os.path.join(root, "table5.csv")),
                artifacts.write_csv(table7, os.path.join(root, "table7.csv"))]

    _, test = seg_entropy.study_scenes(settings, bundle)
    top = max(settings.levels)
    for kind in settings.kinds:
        group = table5[table5["kind"] == kind].sort_values("level")
        produced.append(plots.curves_svg(group["level"], {c: group[c] for c in ("reference", "bnn", "tta")},
                                         os.path.join(root, f"entropy_{kind}.svg"),
                                         title=kind, xlabel="noise level", ylabel="entropy (nats)"))
        reps = seg_entropy.replicate_logits(baseline, test[0], kind, top, settings.replicates, settings,
                                            bundle.child(f"example.{kind}"))
        produced += list(seg_entropy.save_logit_field(reps, os.path.join(root, f"logits_{kind}")).values())
        report = seg_entropy.reference_entropy(reps, settings.mc_samples, settings.bins,
                                               bundle.child(f"example.{kind}"), settings.estimator)
        produced.append(artifacts.write_csv(report.to_frame(), os.path.join(root, f"entropy_{kind}.csv")))
        summary[f"example_{kind}_patch_value"] = report.patch_value
    produced.append(artifacts.write_json(summary, os.path.join(root, "summary.json")))
    artifacts.write_config(root, cfg)
    logger.info(f"✅ entropy: {len(table5)} rows, reference increasing: {summary['reference_increasing']}")
    return _summary("Entropy", root, produced, [], reference_increasing=summary["reference_increasing"])


def _classification_outputs(table6: pd.DataFrame, reports: Dict, summary: Dict, directory: str) -> List[str]:
    produced = [artifacts.write_csv(table6, os.path.join(directory, "table6.csv"))]
    for encoding, report in reports.items():
        produced.append(artifacts.write_json(report.to_dict(), os.path.join(directory, f"calibration_{encoding}.json")))
        produced.append(plots.reliability_svg(report, os.path.join(directory, f"reliability_{encoding}.svg"),
                                              title=f"{encoding}: ECE = {report.ece:.4f}"))
    produced.append(artifacts.write_json(summary, os.path.join(directory, "summary.json")))
    return produced


def cmd_classify(cfg: BenchConfig, force: bool = False) -> Dict:
    """One-hot vs distributional labels on synthetic ambiguous vote corpora."""
    root = os.path.join(cfg.output_dir, "classify")
    if _skip(root, cfg, ["table6.csv"], force):
        return _summary("Classify", root, [], [root])
    table6, reports, summary = reproduce.reproduce_table6(cfg)
    produced = _classification_outputs(table6, reports, summary, root)
    artifacts.write_config(root, cfg)
    logger.info(f"✅ classify: mean ECE {summary['mean_ece']}")
    return _summary("Classify", root, produced, [], **summary)


def cmd_reproduce(cfg: BenchConfig, table: str = "2", force: bool = False) -> Dict:
    """Run one table end to end from the root seed; CSVs, SVGs, summary and tables.xlsx."""
    root = os.path.join(cfg.output_dir, "reproduce", f"table_{table}")
    main_csv = {"2": "table2.csv", "4": "table4.csv", "5-trend": "table5.csv", "6-direction": "table6.csv"}
    if table not in main_csv:
        raise ConfigurationError(f"Unknown table '{table}'; expected one of {sorted(main_csv)}")
    if _skip(root, cfg, [main_csv[table], "tables.xlsx"], force):
        return _summary("Reproduce", root, [], [root])

    produced, sheets, summary = [], {}, {}
    if table == "2":
        table2, correlations = reproduce.reproduce_table2(cfg)
        sheets["table2"] = table2
        produced.append(artifacts.write_csv(table2, os.path.join(root, "table2.csv")))
        for method, corr in correlations.items():
            produced += _correlation_outputs(corr, method, root)
        summary = {"u_shape": reproduce.u_shape(table2),
                   "correlation_share_above_0.9": {m: c.share_above(0.9) for m, c in correlations.items()}}
    elif table == "4":
        table4 = reproduce.reproduce_table4(cfg)
        sheets["table4"] = table4
        produced.append(artifacts.write_csv(table4, os.path.join(root, "table4.csv")))
        summary = {"size_direction": reproduce.size_direction(table4)}
    elif table == "5-trend":
        table5, table7, summary = reproduce.reproduce_table5(cfg)
        sheets.update(table5=table5, table7=table7)
        produced += [artifacts.write_csv(table5, os.path.join(root, "table5.csv")),
                     artifacts.write_csv(table7, os.path.join(root, "table7.csv"))]
    else:
        table6, reports, summary = reproduce.reproduce_table6(cfg)
        sheets["table6"] = table6
        produced += _classification_outputs(table6, reports, summary, root)
    if table != "6-direction":
        produced.append(artifacts.write_json(summary, os.path.join(root, "summary.json")))
    produced.append(artifacts.write_workbook(sheets, os.path.join(root, "tables.xlsx")))
    artifacts.write_config(root, cfg)
    logger.info(f"✅ reproduce table {table}: {summary}")
    return _summary("Reproduce", root, produced, [], table=table, **summary)


COMMANDS: Dict[str, Callable[..., Dict]] = {
    "generate": cmd_generate,
    "reference": cmd_reference,
    "train-eval": cmd_train_eval,
    "entropy": cmd_entropy,
    "classify": cmd_classify,
    "reproduce": cmd_reproduce,
}


__all__ = [
    'configure_logging',
    'alpha_dirname',
    'cmd_generate',
    'cmd_reference',
    'cmd_train_eval',
    'cmd_entropy',
    'cmd_classify',
    'cmd_reproduce',
    'COMMANDS',
]
