"""Run orchestration: data -> flow -> observables -> verdicts, with checkpoints."""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import abelian, flow, lie
from . import observables as obs
from .calculus import Grid
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, config_hash, emit_config, parse_config, with_t_end
from .fields import FieldSpace, smooth_form

__all__ = [
    "Verdict",
    "RunReport",
    "build_space",
    "initial_field",
    "parse_loops",
    "save_times",
    "run",
    "resume",
    "read_state",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Verdict:
    name: str
    value: float
    tol: float
    passed: bool

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} {self.value:.6e} {self.tol:.6e}"


@dataclass
class RunReport:
    out_dir: str
    verdicts: list = field(default_factory=list)
    final_time: float = 0.0

    @property
    def ok(self) -> bool:
        return all(v.passed for v in self.verdicts)

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1


# ---------------------------------------------------------------- construction


def build_space(cfg: RunConfig) -> FieldSpace:
    grid = Grid(cfg.grid_dims, cfg.h, cfg.grid_domain)
    return FieldSpace.make(grid, cfg.bc, cfg.group)


def _u1_mode(space: FieldSpace, wave, amplitude: float) -> np.ndarray:
    """Single Fourier mode in the second component (divergence-free on the torus).

    On a box the mode is a product of cos/sin matching the component's parities;
    an odd axis with zero wave number uses the lowest sine so the mode is nonzero.
    """
    grid = space.grid
    mesh = grid.mesh()
    out = np.zeros(space.cal.shape(1, 1))
    k = np.asarray(wave, dtype=float)
    if grid.periodic:
        phase = sum(2 * np.pi * k[a] * mesh[a] / grid.lengths[a] for a in range(3))
        # polarization orthogonal to the centered-difference symbol (or along y)
        sym = np.array([np.sin(2 * np.pi * k[a] / grid.dims[a]) for a in range(3)])
        pol = np.cross(sym, [0.0, 0.0, 1.0]) if np.any(sym[:2]) else np.array([0.0, 1.0, 0.0])
        pol = pol / np.linalg.norm(pol)
        for c in range(3):
            out[c, ..., 0] = amplitude * pol[c] * np.sin(phase)
    else:
        # a box mode compatible with the parities of the second component
        par = space.cal.parity[1][1]
        prod = np.ones(grid.dims)
        for a in range(3):
            if par[a] == "o":
                prod = prod * np.sin(np.pi * max(abs(k[a]), 1) * mesh[a] / grid.lengths[a])
            else:
                prod = prod * np.cos(np.pi * k[a] * mesh[a] / grid.lengths[a])
        out[1, ..., 0] = amplitude * prod
    return space.cal.apply_mask(out, 1)


def initial_field(cfg: RunConfig, space: FieldSpace) -> np.ndarray:
    kind = cfg.initial_kind
    if kind == "zero":
        return np.zeros(space.cal.shape(1, space.m))
    if kind == "smooth":
        return smooth_form(space, 1, cfg.initial_seed, cfg.initial_amplitude, cfg.initial_kmax)
    if kind == "pure_gauge":
        alpha = smooth_form(space, 0, cfg.initial_seed, cfg.initial_amplitude, cfg.initial_kmax)
        g = space.gauge_from_algebra(alpha).elems
        return space.pure_gauge(g)
    if kind == "u1_mode":
        return _u1_mode(space, cfg.initial_wave, cfg.initial_amplitude)
    if kind == "ha_sample":
        return abelian.sample_ha_data(space, cfg.initial_a, cfg.initial_seed, cfg.initial_amplitude)
    if kind == "checkpoint":
        return load_checkpoint(cfg.initial_path).arrays["field"]
    raise ValueError(f"unknown initial data kind {kind!r}")


def parse_loops(text: str, h: float) -> list:
    """One loop per ';' or newline separated entry.

    ``rect x y z a b la lb [delta]``: counterclockwise rectangle in the (a, b) plane;
    ``poly x1 y1 z1 ... xk yk zk [delta=d]``: closed polyline (first = last).
    The default sub-segment length is h/2.
    """
    loops = []
    for entry in text.replace("\n", ";").split(";"):
        tok = entry.split()
        if not tok:
            continue
        delta = 0.5 * h
        if tok[-1].startswith("delta="):
            delta = float(tok.pop()[6:])
        if tok[0] == "rect":
            x, y, z, a, b, la, lb = tok[1:8]
            loops.append(obs.Loop.rectangle((float(x), float(y), float(z)), int(a), int(b),
                                            float(la), float(lb), delta))
        elif tok[0] == "poly":
            vals = [float(v) for v in tok[1:]]
            if len(vals) % 3:
                raise ValueError(f"poly loop needs coordinate triples: {entry!r}")
            loops.append(obs.Loop(tuple(zip(vals[0::3], vals[1::3], vals[2::3])), delta))
        else:
            raise ValueError(f"unknown loop kind {tok[0]!r}")
    return loops


def save_times(cfg: RunConfig, t_start: float, t_end: float) -> list:
    """Stamps in (t_start, t_end]: geometric from observables.t_first, the uniform
    grid k * observables.save_dt, every epsilon, and t_end.  Independent of t_end
    otherwise, so a resumed run steps exactly like an uninterrupted one."""
    stamps = {float(t_end)}
    if cfg.observables_t_first:
        t = cfg.observables_t_first
        while t < t_end:
            stamps.add(t)
            t *= 2.0
    if cfg.observables_save_dt:
        k = 1
        while k * cfg.observables_save_dt < t_end * (1 - 1e-12):
            stamps.add(k * cfg.observables_save_dt)
            k += 1
    stamps.update(float(e) for e in cfg.observables_eps)
    return sorted(s for s in stamps if t_start < s <= t_end)


# ---------------------------------------------------------------- state io


def _header(cfg: RunConfig, space: FieldSpace, state: flow.FlowState, series: dict,
            eps_active: list) -> dict:
    return {
        "grid": space.grid.header(),
        "bc": space.bc.value,
        "group": space.group.header(),
        "time": state.t,
        "steps": state.steps,
        "mode": flow.Mode(state.mode).value,
        "field_kind": "connection" if state.mode == flow.Mode.DIRECT else "zds_connection",
        "config_hash": config_hash(cfg),
        "config": emit_config(cfg),
        "series": {k: [list(s) for s in v] for k, v in series.items()},
        "eps_active": eps_active,
    }


def write_state(path, cfg, space, state, series, eps_gauges: dict, field0=None) -> None:
    arrays = {"field": (state.field, "form")}
    if state.g is not None:
        arrays["g"] = (state.g, "gauge")
    if field0 is not None:
        arrays["field0"] = (field0, "form")
    for k, g in eps_gauges.items():
        arrays[f"g_eps_{k}"] = (g, "gauge")
    save_checkpoint(path, _header(cfg, space, state, series, sorted(eps_gauges)), arrays)


def read_state(path):
    """(config, FieldSpace, FlowState, series, eps gauges, field0, header)."""
    ck = load_checkpoint(path)
    head = ck.header
    cfg = parse_config(head["config"])
    space = build_space(cfg)
    state = flow.FlowState(head["time"], ck.arrays["field"], flow.Mode(head["mode"]),
                           ck.arrays.get("g"), head["steps"])
    series = {k: [tuple(s) for s in v] for k, v in head["series"].items()}
    eps = {int(k): ck.arrays[f"g_eps_{k}"] for k in head["eps_active"]}
    return cfg, space, state, series, eps, ck.arrays.get("field0"), head


# ---------------------------------------------------------------- main loop


def _write_series(out_dir: str, name: str, samples) -> None:
    obs.ObservableSeries(name, list(samples)).to_csv(os.path.join(out_dir, f"{name}.csv"))


def _dedupe(samples):
    """Keep the last sample at each time (series are appended per step)."""
    out = []
    for t, v in samples:
        if out and t <= out[-1][0]:
            continue
        out.append((t, v))
    return out


def run(cfg: RunConfig, out_dir: str | None = None) -> RunReport:
    space = build_space(cfg)
    field0 = initial_field(cfg, space)
    state = flow.initial_state(space, field0, cfg.mode)
    return _drive(cfg, space, state, None, {}, field0, out_dir or cfg.output_dir)


def resume(checkpoint: str, until: float, out_dir: str | None = None,
           config: RunConfig | None = None, force: bool = False) -> RunReport:
    cfg0, space, state, series, eps, field0, head = read_state(checkpoint)
    if config is not None and config_hash(config) != head["config_hash"] and not force:
        raise ValueError("configuration hash differs from the checkpoint (use --force)")
    cfg = with_t_end(config or cfg0, until)
    if until < state.t:
        raise ValueError(f"--until {until} precedes the checkpoint time {state.t}")
    return _drive(cfg, space, state, series, eps, field0,
                  out_dir or os.path.dirname(os.path.abspath(checkpoint)))


def _drive(cfg, space, state, series, eps_gauges, field0, out_dir) -> RunReport:
    os.makedirs(out_dir, exist_ok=True)
    stepper = flow.StepperConfig(cfg.stepper_dt_init, cfg.stepper_cfl, cfg.stepper_t_end,
                                 cfg.stepper_energy_backtrack, cfg.stepper_reproject_every)
    traj = flow.Trajectory(space, flow.Mode(cfg.mode))
    if series is None:
        traj.record_state(state)
        traj.record_series(state.t, state.field)
    else:
        traj.series = {k: list(v) for k, v in series.items()}
        traj.record_state(state)
    loops = parse_loops(cfg.observables_loops, space.grid.h) if "wilson" in cfg.observables_list else []
    eps_list = list(cfg.observables_eps) if "epsilon" in cfg.observables_list else []
    saves = save_times(cfg, state.t, cfg.stepper_t_end)
    n_saved = [0]

    def on_step(old, new):
        for k, e in enumerate(eps_list):
            if k in eps_gauges:
                g = flow.gauge_flow_step(space, eps_gauges[k], old.field, new.field, new.t - old.t)
                if (new.steps) % cfg.stepper_reproject_every == 0:
                    g = lie.project_to_group(space.group, g)
                eps_gauges[k] = g
            elif abs(new.t - e) <= 1e-12 * max(1.0, e):
                eps_gauges[k] = space.identity_gauge().elems

    def on_save(st, tr):
        if loops:
            A = st.field if st.g is None else space.gauge_transform(st.field, st.g)
            w = obs.wilson_loops(space, A, loops)
            tr.series.setdefault("wilson", []).append(
                (st.t, [[float(v.real), float(v.imag)] for v in w]))
        if len(eps_gauges) >= 2:
            ks = sorted(eps_gauges)
            a_s = [space.gauge_transform(st.field, eps_gauges[k]) for k in ks]
            tr.series.setdefault("epsilon_gap", []).append(
                (st.t, [space.l2(a_s[i] - a_s[i + 1]) for i in range(len(ks) - 1)]))
        n_saved[0] += 1
        every = cfg.output_checkpoint_every
        if every and n_saved[0] % every == 0:
            write_state(os.path.join(out_dir, f"checkpoint_{n_saved[0]:05d}.ckpt"),
                        cfg, space, st, tr.series, eps_gauges, field0)

    try:
        traj = flow.run(space, state, stepper, save_times=saves, trajectory=traj,
                        on_save=on_save, on_step=on_step)
    except flow.StepFailure as exc:
        log.error("step failure: %s %s", exc, exc.diagnostics)
        report = RunReport(out_dir, [Verdict("step_failure", exc.diagnostics.get("t", 0.0), 0.0, False)])
        _write_report(out_dir, report)
        return report
    final = traj.final
    write_state(os.path.join(out_dir, "final.ckpt"), cfg, space, final, traj.series,
                eps_gauges, field0)
    report = RunReport(out_dir, _verdicts(cfg, space, traj, field0), final.t)
    _emit_series(cfg, space, traj, out_dir)
    _write_report(out_dir, report)
    return report


def _emit_series(cfg, space, traj, out_dir) -> None:
    s = {k: _dedupe(traj.series[k]) for k in flow.SERIES}
    for k in flow.SERIES:
        _write_series(out_dir, k, s[k])
    t = np.array([x[0] for x in s["energy"]])
    b2 = np.array([x[1] for x in s["energy"]])
    lst = cfg.observables_list
    if "a_action" in lst and len(t) > 1:
        _write_series(out_dir, "a_action", zip(t, obs.a_action(t, b2, cfg.observables_a)))
    if "sup_curvature" in lst:
        b0 = math.sqrt(b2[0])
        sup = np.array([x[1] for x in s["sup_b"]])
        _write_series(out_dir, "sup_curvature", obs.sup_curvature_monitor(t, sup, b0).samples)
    if "small_time" in lst and len(t) > 1:
        mon = obs.small_time_monitor(t, b2, [x[1] for x in s["aprime_sq"]],
                                     [x[1] for x in s["bprime_sq"]])
        for key, ser in mon.items():
            _write_series(out_dir, key, ser.samples)
    if "wilson" in traj.series:
        w = traj.series["wilson"]
        for j in range(len(w[0][1])):
            _write_series(out_dir, f"wilson_{j}_re", [(tt, v[j][0]) for tt, v in w])
            if space.group.abelian:
                _write_series(out_dir, f"wilson_{j}_im", [(tt, v[j][1]) for tt, v in w])
    if "epsilon_gap" in traj.series:
        gaps = traj.series["epsilon_gap"]
        for j in range(len(gaps[0][1])):
            _write_series(out_dir, f"epsilon_gap_{j}", [(tt, v[j]) for tt, v in gaps])


def _verdicts(cfg, space, traj, field0) -> list:
    out = []
    A = traj.fields[-1]
    finite = bool(np.all(np.isfinite(A)))
    out.append(Verdict("finite_field", 0.0 if finite else 1.0, 0.0, finite))
    mask_dev = float(np.max(np.abs(A - space.cal.apply_mask(A, 1)))) if finite else math.inf
    out.append(Verdict("boundary_mask", mask_dev, 0.0, mask_dev == 0.0))
    e = np.array([x[1] for x in _dedupe(traj.series["energy"])])
    if cfg.mode == "direct" and len(e) > 1:
        rise = float(np.max(np.diff(e)))
        tol = 1e-8 * max(e[0], 1.0)
        out.append(Verdict("energy_monotone", max(rise, 0.0), tol, rise <= tol))
    if traj.gauges[-1] is not None:
        r = lie.unitarity_residual(traj.gauges[-1])
        out.append(Verdict("gauge_unitarity", r, 1e-10, r <= 1e-10))
    if "residuals" in cfg.observables_list:
        res = obs.boundary_residuals(space, A)
        key = {"neumann": "neumann_B", "dirichlet": "dirichlet_B"}.get(cfg.bc)
        if key:
            out.append(Verdict(key, res[key], 1e-12, res[key] <= 1e-12))
        b = obs.bianchi_residual(space, A)
        out.append(Verdict("bianchi", b, math.inf, math.isfinite(b)))
    if "oracle" in cfg.observables_list and field0 is not None:
        t = traj.times[-1]
        if cfg.mode == "direct":
            ref = abelian.u1_direct_solution(space, field0, t)
        else:
            ref = abelian.u1_zds_solution(space, field0, t)
        nrm = space.l2(ref)
        err = space.l2(A - ref) / nrm if nrm > 0 else space.l2(A)
        out.append(Verdict("oracle_rel_l2", err, cfg.oracle_tol, err <= cfg.oracle_tol))
    return out


def _write_report(out_dir: str, report: RunReport) -> None:
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        for v in report.verdicts:
            fh.write(v.line() + "\n")


# ---------------------------------------------------------------- auxiliary pipelines


def compare_oracle(cfg: RunConfig, out_dir: str | None = None) -> RunReport:
    """Run a U(1) configuration and record the relative L2 error against the
    closed-form solution at every save time (series ``oracle_error``)."""
    if cfg.group != "U1":
        raise ValueError("oracle comparison requires group = U1")
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    space = build_space(cfg)
    field0 = initial_field(cfg, space)
    state = flow.initial_state(space, field0, cfg.mode)
    stepper = flow.StepperConfig(cfg.stepper_dt_init, cfg.stepper_cfl, cfg.stepper_t_end,
                                 cfg.stepper_energy_backtrack, cfg.stepper_reproject_every)
    traj = flow.run(space, state, stepper, save_times=save_times(cfg, 0.0, cfg.stepper_t_end))
    oracle = abelian.u1_direct_solution if cfg.mode == "direct" else abelian.u1_zds_solution
    errs = []
    for t, A in zip(traj.times[1:], traj.fields[1:]):
        ref = oracle(space, field0, t)
        nrm = space.l2(ref)
        errs.append((t, space.l2(A - ref) / nrm if nrm > 0 else space.l2(A)))
    _write_series(out_dir, "oracle_error", errs)
    worst = max(e for _, e in errs)
    report = RunReport(out_dir, [Verdict("oracle_rel_l2", worst, cfg.oracle_tol,
                                         worst <= cfg.oracle_tol)], traj.times[-1])
    _write_report(out_dir, report)
    return report


def parse_v0(spec: str) -> tuple[str, dict]:
    """``kind:key=value,...`` with kind in {smooth, vertical, zero}."""
    kind, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        k, _, v = item.partition("=")
        params[k.strip()] = float(v) if k.strip() != "seed" else int(v)
    if kind not in ("smooth", "vertical", "zero"):
        raise ValueError(f"unknown v0 kind {kind!r}")
    return kind, params


def variational(cfg: RunConfig, v0_spec: str, out_dir: str | None = None) -> RunReport:
    """Tangent flow along a direct-mode base trajectory stored at every step."""
    from . import variational as var

    if cfg.mode != "direct":
        raise ValueError("the variational equation is integrated along mode = direct")
    kind, p = parse_v0(v0_spec)
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    space = build_space(cfg)
    field0 = initial_field(cfg, space)
    stepper = flow.StepperConfig(cfg.stepper_dt_init, cfg.stepper_cfl, cfg.stepper_t_end,
                                 False, cfg.stepper_reproject_every)
    dt = stepper.dt_max(space.grid.h)
    n = max(1, math.ceil(cfg.stepper_t_end / dt - 1e-9))
    stamps = list(np.linspace(0.0, cfg.stepper_t_end, n + 1)[1:])
    base = flow.run(space, flow.initial_state(space, field0, "direct"), stepper,
                    save_times=stamps, record_every_step=False)
    verdicts = []
    if kind == "vertical":
        alpha = smooth_form(space, 0, p.get("seed", 0), p.get("amplitude", 1.0),
                            int(p.get("kmax", 1)))
        vs = var.vertical_solution(space, alpha, base.fields)
        res = var.vertical_residuals(space, alpha, base.fields)
        _write_series(out_dir, "vertical_residual", zip(base.times, res))
        verdicts.append(Verdict("vertical_residual_finite", float(np.max(res)), math.inf,
                                bool(np.all(np.isfinite(res)))))
    else:
        v0 = (np.zeros(space.cal.shape(1, space.m)) if kind == "zero" else
              smooth_form(space, 1, p.get("seed", 0), p.get("amplitude", 1.0),
                          int(p.get("kmax", 1))))
        vs = var.integrate_variational(space, v0, base.times, base.fields)
    norms = [space.l2(v) for v in vs]
    _write_series(out_dir, "tangent_norm", zip(base.times, norms))
    verdicts.append(Verdict("tangent_finite", float(max(norms)), math.inf,
                            bool(np.all(np.isfinite(norms)))))
    report = RunReport(out_dir, verdicts, base.times[-1])
    _write_report(out_dir, report)
    return report


def collect_reports(directory: str) -> tuple[list[str], bool]:
    """Verdict lines of every report*.txt under ``directory`` and whether any
    series CSV exists."""
    lines, has_series = [], False
    for root, _, files in os.walk(directory):
        for f in sorted(files):
            if f.endswith(".csv"):
                has_series = True
            if f.startswith("report") and f.endswith(".txt"):
                with open(os.path.join(root, f)) as fh:
                    lines += [ln.strip() for ln in fh if ln.strip()]
    return lines, has_series
