"""Experiment configuration: a single versioned JSON document.

Blocks: ``run`` (solver parameters), ``noise`` (coefficient family),
``diagnostics`` (which ledgers and tests to compute), ``ensemble`` (path
count, base seed, workers) and ``output`` (directory, stride, what to
persist). Parsing then serializing is the identity on the canonical form,
and the SHA-256 of the canonical form stamps every output for provenance.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .dissipation import DRConfig
from .errors import ConfigurationError
from .integrate import RunParams
from .noise import KINDS as NOISE_KINDS
from .noise import NoiseModel, make_noise_model
from .spectral import Grid
from .testfunc import SpatialBump, TemporalWindow, TestFunction
from .vorticity import HFunction

SCHEMA_VERSION = 1


def _need(block: dict, key: str, kind, where: str):
    if key not in block:
        raise ConfigurationError(f"{where}.{key}: missing")
    val = block[key]
    if kind is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, kind):
        raise ConfigurationError(f"{where}.{key}: expected {kind.__name__}, got {type(val).__name__}")
    return val


def _opt(block: dict, key: str, default):
    return block.get(key, default)


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict

    # ---- construction --------------------------------------------------------

    @classmethod
    def parse(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigurationError("config root must be an object")
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigurationError(
                f"schema_version: expected {SCHEMA_VERSION}, got {version!r}"
            )
        for block in ("run", "ensemble", "output"):
            if block not in doc:
                raise ConfigurationError(f"{block}: missing block")
        cfg = cls(raw=json.loads(canonical_json(doc)))
        # eager validation of every cross-referenced object
        cfg.run_params(path_id=0)
        cfg.noise_model()
        cfg.test_functions()
        cfg.events()
        cfg.dr_config()
        cfg.h_function()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as err:
            raise ConfigurationError(f"{path}: invalid JSON ({err})") from None
        return cls.parse(doc)

    # ---- blocks --------------------------------------------------------------

    def grid(self) -> Grid:
        run = self.raw["run"]
        m = _need(run, "m", int, "run")
        cutoff = _opt(run, "dealias_cutoff", -1)
        return Grid(m, cutoff)

    def run_params(self, path_id: int) -> RunParams:
        run = self.raw["run"]
        ens = self.raw["ensemble"]
        return RunParams(
            nu=_need(run, "nu", float, "run"),
            epsilon=_need(run, "epsilon", float, "run"),
            dt=_need(run, "dt", float, "run"),
            t_end=_need(run, "t_end", float, "run"),
            grid=self.grid(),
            seed=_need(ens, "seed", int, "ensemble"),
            path_id=path_id,
            scheme=_opt(run, "scheme", "em_semi_implicit"),
            mollifier_kind=_opt(run, "mollifier_kind", "paper_bump"),
            stride=_opt(self.raw["output"], "stride", 1),
        )

    def noise_model(self) -> NoiseModel | None:
        block = self.raw.get("noise")
        if block is None:
            return None
        kind = _need(block, "kind", str, "noise")
        if kind == "off":
            return None
        if kind not in NOISE_KINDS:
            raise ConfigurationError(f"noise.kind: unknown family {kind!r}")
        coefficient_files = block.get("coefficient_files")
        if coefficient_files is not None:
            return self._noise_from_files(kind, coefficient_files, block)
        return make_noise_model(
            self.grid(), kind,
            amplitude=_need(block, "amplitude", float, "noise"),
            ratio=_opt(block, "ratio", 0.5),
            max_k=_opt(block, "max_k", 64),
            flatness=_opt(block, "flatness", 0.5),
        )

    def _noise_from_files(self, kind, files, block) -> NoiseModel:
        from .persist import read_snapshot
        from .spectral import ScalarField, SpectralField

        grid = self.grid()
        fields = []
        for f in files:
            fld, _ = read_snapshot(f, grid)
            fields.append(fld)
        want_scalar = kind == "linear_multiplicative"
        for i, fld in enumerate(fields):
            is_scalar = isinstance(fld, ScalarField)
            if is_scalar != want_scalar:
                raise ConfigurationError(
                    f"noise.coefficient_files[{i}]: wrong field kind for {kind}"
                )
        tail = _opt(block, "tail_beyond_max_k", 0.0)
        if want_scalar:
            return NoiseModel(kind, grid, len(fields), scalar_fields=tuple(fields),
                              tail_beyond_max_k=tail, decay_note="loaded from files")
        return NoiseModel(kind, grid, len(fields), vector_fields=tuple(fields),
                          tail_beyond_max_k=tail, decay_note="loaded from files")

    def diagnostics(self) -> dict:
        return self.raw.get("diagnostics", {})

    def test_functions(self) -> dict[str, TestFunction]:
        out = {}
        t_end = self.raw["run"]["t_end"]
        specs = self.diagnostics().get("test_functions", [])
        for i, spec in enumerate(specs):
            name = spec.get("name", f"phi{i}")
            spatial = None
            if "spatial" in spec:
                sp = spec["spatial"]
                spatial = SpatialBump(
                    center=tuple(_opt(sp, "center", (0.5, 0.5, 0.5))),
                    exponent=_need(sp, "exponent", int, f"test_functions[{i}].spatial"),
                )
            temporal = None
            if "temporal" in spec:
                tp = spec["temporal"]
                a = _need(tp, "a", float, f"test_functions[{i}].temporal")
                b = _need(tp, "b", float, f"test_functions[{i}].temporal")
                if not (0.0 <= a < b <= t_end):
                    raise ConfigurationError(
                        f"test_functions[{i}].temporal: support ({a}, {b}) not inside (0, {t_end})"
                    )
                temporal = TemporalWindow(a, b, _need(tp, "ramp", float,
                                                      f"test_functions[{i}].temporal"))
            out[name] = TestFunction(spatial, temporal, label=name)
        return out

    def events(self):
        from .energy import Event

        out = []
        for i, spec in enumerate(self.diagnostics().get("events", [{"kind": "all"}])):
            kind = _need(spec, "kind", str, f"events[{i}]")
            out.append(Event(kind, at=_opt(spec, "at", 0.0), q=_opt(spec, "q", 0.5)))
        return out

    def dr_config(self) -> DRConfig | None:
        block = self.diagnostics().get("dissipation")
        if block is None:
            return None
        cfg = DRConfig(
            ell_values=tuple(_need(block, "ell_values", list, "diagnostics.dissipation")),
            alpha_kind=_opt(block, "alpha_kind", "paper_bump"),
            quadrature=_opt(block, "quadrature", 24),
        )
        cfg.validate_resolution(self.grid())
        return cfg

    def h_function(self) -> HFunction | None:
        block = self.diagnostics().get("vorticity")
        if block is None:
            return None
        return HFunction(_opt(block, "delta", 0.5))

    def ensemble_block(self) -> dict:
        ens = self.raw["ensemble"]
        return {
            "paths": _need(ens, "paths", int, "ensemble"),
            "seed": _need(ens, "seed", int, "ensemble"),
            "workers": _opt(ens, "workers", 1),
        }

    def output_block(self) -> dict:
        out = self.raw["output"]
        return {
            "directory": _need(out, "directory", str, "output"),
            "stride": _opt(out, "stride", 1),
            "save_snapshots": _opt(out, "save_snapshots", False),
            "write_csv": _opt(out, "write_csv", True),
        }

    def initial_condition_spec(self) -> dict:
        return self.raw["run"].get(
            "initial_condition", {"kind": "taylor_green", "amplitude": 1.0}
        )

    # ---- provenance ---------------------------------------------------------

    def canonical(self) -> str:
        return canonical_json(self.raw)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def initial_field(cfg: ExperimentConfig):
    """Build the configured initial condition on the configured grid."""
    import numpy as np

    from .spectral import SpectralField, forward_transform, leray_project, dealias

    spec = cfg.initial_condition_spec()
    grid = cfg.grid()
    kind = spec.get("kind", "taylor_green")
    amp = float(spec.get("amplitude", 1.0))
    if kind == "taylor_green":
        x = grid.points()
        u = np.empty((3, grid.m, grid.m, grid.m))
        u[0] = np.sin(2 * np.pi * x[0]) * np.cos(2 * np.pi * x[1]) * np.cos(2 * np.pi * x[2])
        u[1] = -np.cos(2 * np.pi * x[0]) * np.sin(2 * np.pi * x[1]) * np.cos(2 * np.pi * x[2])
        u[2] = 0.0
        return forward_transform(grid, amp * u)
    if kind == "random_solenoidal":
        seed = int(spec.get("seed", 7))
        gen = np.random.Generator(np.random.Philox(key=seed))
        samples = amp * gen.standard_normal((3, grid.m, grid.m, grid.m))
        f = dealias(leray_project(forward_transform(grid, samples)))
        c = f.coeffs.copy()
        c[:, 0, 0, 0] = 0.0
        smooth = float(spec.get("smooth", 0.0))
        if smooth > 0:
            c *= np.exp(-smooth * grid.k2)
        return SpectralField(grid, c)
    if kind == "snapshot":
        from .persist import read_snapshot

        fld, _ = read_snapshot(spec["path"], grid)
        return fld
    raise ConfigurationError(f"run.initial_condition.kind: unknown kind {kind!r}")
