"""Size and power tables for the CF, KS and CvM tests.

Six standard designs: two with a normal/exponential null
(size under exponential inefficiency, power against half-normal) and four
with a normal/gamma(2) null (size, and power against exponential, gamma(3)
and gamma(0.5) inefficiency). Noise is N(0, 1) throughout and the frontier
is a pure location model ``y = 0.5 + eps``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
import zlib
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

from .distributions import ComposedSpec, Exponential, Gamma, HalfNormal, NoiseSpec, Orientation
from .estimation import NullModel
from .resampling import DataGenerator, Statistic, warp_speed_mc_multi

__all__ = [
    "TableDesign",
    "TABLES",
    "McConfig",
    "McTableRow",
    "CSV_COLUMNS",
    "run_table",
    "emit_results",
    "rows_to_csv",
]

PARAM_GRID = (0.5, 1.0, 3.0, 5.0, 8.0, 10.0)
N_GRID = (100, 200, 300, 500)
LAMBDA_GRID = (0.5, 1.0, 2.0, 3.0, 4.0, 5.0)

CSV_COLUMNS = (
    "table_id",
    "generator",
    "param",
    "n",
    "test",
    "lambda",
    "rejection_pct",
    "M",
    "alpha",
    "seed",
    "failures",
    "elapsed_s",
)


@dataclass(frozen=True)
class TableDesign:
    table_id: str
    null: str  # "exponential" | "gamma2"
    generator: str  # "exponential" | "gamma" | "halfnormal"
    param: str  # name of the swept parameter
    kappa: Optional[float] = None
    aliases: tuple = ()

    def null_model(self, orientation=Orientation.PRODUCTION) -> NullModel:
        return NullModel.exponential(orientation) if self.null == "exponential" else NullModel.gamma2(orientation)

    def error(self, value: float, sigma_v: float = 1.0, orientation=Orientation.PRODUCTION) -> ComposedSpec:
        if self.generator == "exponential":
            ineff = Exponential(value)
        elif self.generator == "gamma":
            ineff = Gamma(self.kappa, value)
        elif self.generator == "halfnormal":
            ineff = HalfNormal(value)
        else:
            raise ValueError(f"unknown generator family {self.generator!r}")
        return ComposedSpec(NoiseSpec(sigma_v), ineff, Orientation(orientation))

    @property
    def generator_label(self) -> str:
        base = {"exponential": "normal/exponential", "halfnormal": "normal/half-normal"}.get(self.generator)
        return base or f"normal/gamma(kappa={self.kappa:g})"


TABLES = {
    d.table_id: d
    for d in (
        TableDesign("exp-size", "exponential", "exponential", "theta", aliases=("ExpSize", "table1")),
        TableDesign("exp-power-hn", "exponential", "halfnormal", "sigma_u", aliases=("ExpPowerHN", "table2")),
        TableDesign("gamma-size", "gamma2", "gamma", "theta", 2.0, aliases=("GammaSize", "table3")),
        TableDesign("gamma-power-exp", "gamma2", "exponential", "theta", aliases=("GammaPowerExp", "table4")),
        TableDesign("gamma-power-k3", "gamma2", "gamma", "theta", 3.0, aliases=("GammaPowerK3", "table5")),
        TableDesign("gamma-power-k05", "gamma2", "gamma", "theta", 0.5, aliases=("GammaPowerK05", "table6")),
    )
}


def lookup_table(table_id: str) -> TableDesign:
    if table_id in TABLES:
        return TABLES[table_id]
    for design in TABLES.values():
        if table_id in design.aliases:
            return design
    raise KeyError(f"unknown table id {table_id!r}; choose from {', '.join(TABLES)}")


@dataclass
class McConfig:
    """Monte Carlo study configuration.

    ``table_id`` names one of :data:`TABLES` or is ``"custom"``, in which
    case ``null``, ``generator``, ``generator_kappa`` and ``param_name``
    describe the design.
    """

    table_id: str = "exp-size"
    param_grid: Sequence[float] = PARAM_GRID
    n_grid: Sequence[int] = N_GRID
    lambda_grid: Sequence[float] = LAMBDA_GRID
    M: int = 500
    alpha: float = 0.05
    master_seed: int = 0
    include_classical: bool = True
    sigma_v: float = 1.0
    orientation: str = "production"
    # custom designs only
    null: Optional[str] = None
    generator: Optional[str] = None
    generator_kappa: Optional[float] = None
    param_name: Optional[str] = None
    workers: int = field(default=1, metadata={"digest": False})

    def __post_init__(self):
        self.param_grid = tuple(float(v) for v in self.param_grid)
        self.n_grid = tuple(int(v) for v in self.n_grid)
        self.lambda_grid = tuple(float(v) for v in self.lambda_grid)
        if not (self.param_grid and self.n_grid and (self.lambda_grid or self.include_classical)):
            raise ValueError("grids must be non-empty")
        if self.M < 100:
            raise ValueError("M must be at least 100")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if any(lam <= 0 for lam in self.lambda_grid):
            raise ValueError("lambda values must be positive")
        self.design()  # validates the table id / custom fields

    def design(self) -> TableDesign:
        if self.table_id == "custom":
            if not (self.null and self.generator):
                raise ValueError("custom designs need 'null' and 'generator'")
            return TableDesign("custom", self.null, self.generator, self.param_name or "scale", self.generator_kappa)
        return lookup_table(self.table_id)

    def statistics(self) -> list:
        stats = [Statistic.cf(lam) for lam in self.lambda_grid]
        if self.include_classical:
            stats += [Statistic("ks"), Statistic("cvm")]
        return stats

    @classmethod
    def from_dict(cls, data: dict) -> "McConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    def digest(self) -> str:
        """SHA-256 over the result-determining fields (worker count excluded)."""
        skip = {f.name for f in fields(self) if f.metadata.get("digest") is False}
        payload = {k: v for k, v in self.to_dict().items() if k not in skip}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


@dataclass
class McTableRow:
    table_id: str
    generator: str
    param: str
    n: int
    test: str
    lam: Optional[float]
    rejection_pct: float
    M: int
    alpha: float
    seed: int
    failures: int
    elapsed_s: Optional[float] = None

    def as_record(self, timing: bool = True) -> dict:
        return {
            "table_id": self.table_id,
            "generator": self.generator,
            "param": self.param,
            "n": self.n,
            "test": self.test,
            "lambda": self.lam,
            "rejection_pct": self.rejection_pct,
            "M": self.M,
            "alpha": self.alpha,
            "seed": self.seed,
            "failures": self.failures,
            "elapsed_s": self.elapsed_s if timing else None,
        }


def cell_key(generator: DataGenerator, null_model: NullModel, n: int) -> int:
    """Stable stream key of a (generator, null, n) cell group.

    Derived from the design itself so that a cell's numbers do not depend on
    which other cells are run alongside it.
    """
    label = f"{generator.error.describe()}|{null_model.name}|{n}"
    return zlib.crc32(label.encode())


def run_table(config: McConfig, only=None, progress=None) -> list:
    """Run every (parameter, n) cell group of ``config``.

    ``only`` optionally restricts the grid, e.g. ``{"param": [1.0], "n": [100]}``.
    All statistics of one cell group share the simulated datasets and fits.
    """
    design = config.design()
    null_model = design.null_model(config.orientation)
    statistics = config.statistics()
    only = only or {}
    rows = []
    for value in config.param_grid:
        if "param" in only and value not in only["param"]:
            continue
        error = design.error(value, config.sigma_v, config.orientation)
        generator = DataGenerator(error)
        for n in config.n_grid:
            if "n" in only and n not in only["n"]:
                continue
            start = time.perf_counter()
            runs = warp_speed_mc_multi(
                generator,
                null_model,
                statistics,
                config.M,
                n,
                config.alpha,
                config.master_seed,
                cell_key(generator, null_model, n),
                config.workers,
            )
            elapsed = time.perf_counter() - start
            for stat in statistics:
                run = runs[stat.name]
                rows.append(
                    McTableRow(
                        table_id=design.table_id,
                        generator=design.generator_label,
                        param=f"{design.param}={value:g}",
                        n=n,
                        test=stat.test_name,
                        lam=stat.lam,
                        rejection_pct=100.0 * run.rejection_rate,
                        M=config.M,
                        alpha=config.alpha,
                        seed=config.master_seed,
                        failures=run.failures,
                        elapsed_s=elapsed,
                    )
                )
            if progress is not None:
                progress(design, value, n, runs, elapsed)
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def rows_to_csv(rows: Sequence[McTableRow], timing: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        record = row.as_record(timing)
        writer.writerow([_fmt(record[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def emit_results(rows: Sequence[McTableRow], fmt: str, path, timing: bool = True) -> None:
    """Write rows as CSV (fixed column order) or JSON (list of records).

    With ``timing=False`` the ``elapsed_s`` field is left empty so that
    files from identical configurations are byte-identical.
    """
    if fmt == "csv":
        text = rows_to_csv(rows, timing)
    elif fmt == "json":
        text = json.dumps([r.as_record(timing) for r in rows], indent=2) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
