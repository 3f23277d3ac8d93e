"""Representation-ablation benchmarking and report emission.

The full run covers all 14 non-empty representation combinations in the
standard column order; the report serializes to a fixed CSV layout (one
header plus eight metric rows) and a JSON twin carrying run metadata.
"""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field

from .config import TrainConfig
from .errors import ConfigurationError
from .evaluation import RepresentationCache, cross_validate
from .metrics import METRIC_ROWS, MetricSummary
from .nn.checkpoint import config_digest
from .representations import parse_combo

TABLE_COMBOS = (
    "C",
    "RGB",
    "HSV",
    "G",
    "RGB+HSV",
    "RGB+G",
    "G+HSV",
    "RGB+C",
    "C+HSV",
    "RGB+HSV+C",
    "RGB+HSV+G",
    "RGB+G+C",
    "G+HSV+C",
    "RGB+HSV+G+C",
)


@dataclass
class AblationReport:
    """Metric summaries per combination, in column order."""

    combos: dict[str, MetricSummary]
    seed: int = 0
    config_digest: str = ""
    wall_time_s: float = 0.0
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_rows(cls, combo_ids, rows: dict, **meta) -> "AblationReport":
        """Build a report from row-label -> list-of-values mappings (the
        transposed, table-shaped form)."""
        combos = {}
        for i, combo in enumerate(combo_ids):
            kwargs = {}
            for label, metric, stat in METRIC_ROWS:
                kwargs[f"{metric}_{stat}"] = float(rows[label][i])
            combos[combo] = MetricSummary(**kwargs)
        return cls(combos=combos, **meta)

    def best_combo(self, metric: str = "f1") -> str:
        """Combo with the highest mean of the given metric (first on ties)."""
        best = None
        best_value = -1.0
        for combo, summary in self.combos.items():
            v = summary.value(metric, "mean")
            if v > best_value:
                best, best_value = combo, v
        return best

    def to_csv(self) -> str:
        out = io.StringIO()
        combo_ids = list(self.combos)
        out.write("Metric," + ",".join(combo_ids) + "\n")
        for label, metric, stat in METRIC_ROWS:
            values = [f"{self.combos[c].value(metric, stat):.4f}" for c in combo_ids]
            out.write(label + "," + ",".join(values) + "\n")
        return out.getvalue()

    def to_json(self) -> str:
        payload = {
            "metadata": {
                "seed": self.seed,
                "config_digest": self.config_digest,
                "wall_time_s": round(self.wall_time_s, 3),
                **self.extra,
            },
            "best": {
                metric: self.best_combo(metric)
                for metric in ("precision", "recall", "f1", "accuracy")
            },
            "combos": {c: s.as_dict() for c, s in self.combos.items()},
        }
        return json.dumps(payload, indent=2) + "\n"


def run_ablation(
    config: TrainConfig,
    samples,
    combos=None,
    jobs: int = 1,
    progress=None,
) -> AblationReport:
    """Cross-validate every requested combo with identical seeds.

    Representation planes are computed once per sample and shared across
    combos.  ``progress`` may be a callable taking (combo, summary).
    """
    combo_ids = tuple(combos) if combos is not None else TABLE_COMBOS
    for c in combo_ids:
        parse_combo(c)
    if len(set(combo_ids)) != len(combo_ids):
        raise ConfigurationError(f"duplicate combos in {combo_ids}")

    cache = RepresentationCache(config.contrast) if jobs == 1 else None
    start = time.perf_counter()
    results = {}
    for combo in combo_ids:
        cv = cross_validate(config.with_combo(combo), samples, jobs=jobs, cache=cache)
        results[combo] = cv.pooled
        if progress is not None:
            progress(combo, cv.pooled)
    wall = time.perf_counter() - start
    return AblationReport(
        combos=results,
        seed=config.seed,
        config_digest=config_digest(config.to_dict()),
        wall_time_s=wall,
        extra={"n_images": len(samples), "folds": config.folds},
    )
