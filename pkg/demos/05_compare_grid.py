"""A miniature version of the architecture x condition accuracy grid.

Trains every architecture under clean data, two noise levels and sensor
failures at a short step count, prints the table and writes the CSV, JSON
and SVG reports to ``runs/demo_grid``.  Takes a few minutes.
"""

from pathlib import Path

from fusegate.architectures import KINDS
from fusegate.data import SyntheticDrivingConfig
from fusegate.harness import (
    DatasetConfig,
    ExperimentConfig,
    ModelConfig,
    TrainingConfig,
    compare,
    emit_reports,
)
from fusegate.perturbation import PerturbationSpec

dataset = DatasetConfig(synthetic=SyntheticDrivingConfig(n_samples=9000, seed=0))
conditions = [
    PerturbationSpec(),
    PerturbationSpec("noise", "5%", seed=7),
    PerturbationSpec("noise", "20%", seed=7),
    PerturbationSpec("failure", seed=7),
]
configs = [
    ExperimentConfig(dataset=dataset, model=ModelConfig(kind=kind), perturbation=cond,
                     training=TrainingConfig(iterations=800), name="demo_grid")
    for cond in conditions for kind in KINDS
]
table, results = compare(configs)
print(table.format())
paths = emit_reports(results, Path("runs") / "demo_grid")
print("\nwrote", ", ".join(str(p) for p in paths.values()))
