CLI_DESCRIPTION = """
Uncertainty-quantification benchmark lab.

Commands:
1. `generate`   – write benchmark datasets for the configured track.
2. `reference`  – compute reference sigma tables (regression track).
3. `train-eval` – train a UQ method on saved datasets and score it against the references.
4. `entropy`    – segmentation entropy study on toy scenes.
5. `classify`   – one-hot vs distributional label training with calibration metrics.
6. `reproduce`  – run one table end to end (2, 4, 5-trend, 6-direction).

Configuration:
- `--config path.json` loads a full or partial config.
- `--set key.path=value` overrides single settings (repeatable), e.g. `--set net.epochs=20`.
- Environment defaults: UQBENCH_OUTPUT_ROOT, UQBENCH_SEED, UQBENCH_WORKERS, UQBENCH_LOG_LEVEL.

Outputs:
- Every command writes into its own directory under the output root, next to the resolved `config.json`.
- Rerunning with an identical config skips with a notice; `--force` recomputes.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

COMMAND_HELP = {
    "generate": "Write dataset CSV + metadata JSON per noise level and size multiplier.",
    "reference": "Write raw and smoothed reference sigma tables with fit coefficients.",
    "train-eval": "Train the configured methods on saved datasets; write reports, tables and plots.",
    "entropy": "Reference / BNN / TTA patch entropy across corruption levels.",
    "classify": "Train softmax classifiers on one-hot and distributional labels; report ECE, OA, WAA.",
    "reproduce": "Run one table end to end from the root seed.",
}

TABLE_CHOICES = ("2", "4", "5-trend", "6-direction")
