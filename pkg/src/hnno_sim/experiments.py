"""Named experiment recipes driven by a resolved config (see ``config.py``).

Each recipe returns an :class:`Outcome` holding metrics, pass/fail checks and
CSV tables; writing files and the run report is left to the CLI.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .devices import CloudDynParams, PulseSpec
from .encoding import PATTERNS, load_clips, sample_schedule, synth_benchmark, synth_eeg, threshold_encode
from .errors import ConfigurationError, OutOfLinearRangeError
from .field import (
    CONFIGS,
    ArrayGeometry,
    Materials,
    coupling_suite,
    distance_sweep,
)
from .readout import crossbar_mvm, fit_readout, kfold_cv, quantize_to_crossbar
from .reservoir import Mode, energy_per_clip, make_array, neighbor_replica, run_batch, set_mode, step_array
from .transient import PairConfig, fit_decay_constant, sampled_after_pulses, simulate_pair_transient

__all__ = [
    "Check",
    "Outcome",
    "Table",
    "device_fit",
    "pattern_demo",
    "classify",
    "seizure_demo",
    "field_validate",
    "RECIPES",
]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: object = None
    threshold: object = None

    def to_dict(self) -> dict:
        return {"passed": bool(self.passed), "value": self.value, "threshold": self.threshold}


@dataclass
class Table:
    header: list[str]
    rows: list[list] = dc_field(default_factory=list)

    def to_csv(self) -> str:
        def fmt(v):
            if isinstance(v, (float, np.floating)):
                return repr(float(v))
            if isinstance(v, (np.integer,)):
                return str(int(v))
            return str(v)

        lines = [",".join(self.header)] + [",".join(fmt(v) for v in r) for r in self.rows]
        return "\n".join(lines) + "\n"


@dataclass
class Outcome:
    metrics: dict = dc_field(default_factory=dict)
    checks: list[Check] = dc_field(default_factory=list)
    tables: dict[str, Table] = dc_field(default_factory=dict)
    matrices: dict[str, np.ndarray] = dc_field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)


# --- shared builders --------------------------------------------------------


def _dyn(cfg) -> CloudDynParams:
    d = cfg["device"]
    return CloudDynParams(
        eta_plus=d["eta_plus_um_per_v_us"], eta_minus=d["eta_minus_um_per_v_us"], v_th=d["v_th_v"], tau_x=d["tau_x_us"]
    )


def _bounds(cfg):
    return (cfg["device"]["x_min_um"], cfg["device"]["x_max_um"])


def _array(cfg, n_nodes, mode, *, x_init=None, dt=None):
    d, a = cfg["device"], cfg["array"]
    return make_array(
        n_nodes,
        mode,
        seed=cfg["seed"],
        x_init=a["x_init_um"] if x_init is None else x_init,
        params=_dyn(cfg),
        r_x=d["r_x_mohm_per_um"],
        x_bounds=_bounds(cfg),
        tau_film=d["tau_film_us"],
        c_film=d["c_film_pf"],
        dt=a["dt_us"] if dt is None else dt,
        v_read=a["v_read_v"],
    )


def _is_non_decreasing(xs) -> bool:
    return all(b >= a for a, b in zip(xs, xs[1:]))


# --- device-fit -------------------------------------------------------------


def device_fit(cfg) -> Outcome:
    d, f = cfg["device"], cfg["device_fit"]
    pair = PairConfig(
        x_rest=d["x_rest_um"], r_x=d["r_x_mohm_per_um"], x_bounds=_bounds(cfg), dyn=_dyn(cfg),
        tau_film=d["tau_film_us"], c_film=d["c_film_pf"], sample_dt=f["sample_dt_us"], tail=f["tail_us"],
    )
    out = Outcome()
    traces = Table(["trace", "t_us", "i_ua"])
    fits = Table(["trace", "interval_us", "pulse_count", "tau_us", "amplitude_ua", "r2", "post_train_ua"])

    single = PulseSpec(f["amplitude_v"], f["width_us"])
    tr = simulate_pair_transient(single, pair)
    fit = fit_decay_constant(tr)
    for t, i in zip(tr.t, tr.i):
        traces.rows.append(["single", t, i])
    fits.rows.append(["single", 0.0, 1, fit.tau, fit.amplitude, fit.r2, float(sampled_after_pulses(tr, single)[-1])])

    post = []
    for iv in f["intervals_us"]:
        p = PulseSpec(f["amplitude_v"], f["width_us"], interval=iv, count=f["pulse_count"])
        tr_k = simulate_pair_transient(p, pair)
        fit_k = fit_decay_constant(tr_k)
        last = float(sampled_after_pulses(tr_k, p)[-1])
        post.append(last)
        name = f"interval_{iv:g}"
        for t, i in zip(tr_k.t, tr_k.i):
            traces.rows.append([name, t, i])
        fits.rows.append([name, float(iv), p.count, fit_k.tau, fit_k.amplitude, fit_k.r2, last])

    tau_err = abs(fit.tau - f["tau_target_us"]) / f["tau_target_us"]
    out.metrics = {
        "tau_us": fit.tau,
        "tau_r2": fit.r2,
        "tau_relative_error": tau_err,
        "film_capacitance_pf": pair.film_capacitance(),
        "post_train_current_ua": dict(zip([f"{iv:g}" for iv in f["intervals_us"]], post)),
    }
    out.checks = [
        Check("tau_within_tolerance", tau_err <= f["tau_tolerance"], fit.tau, f["tau_tolerance"]),
        Check("accumulation_decreasing_in_interval", all(b < a for a, b in zip(post, post[1:])), post),
    ]
    out.tables = {"traces.csv": traces, "fits.csv": fits}
    return out


# --- pattern-demo -----------------------------------------------------------

PATTERN_ORDER = ("U", "C", "S", "D")


def pattern_trajectories(cfg):
    """Per pattern: ``(t, I1, I2, step_end_index)``.

    Pads 1-5 (nodes 0-4) carry rows 1-5 of the pattern, one column per input
    step; pad 6 (node 5) is grounded.  ``I1``/``I2`` are the currents flowing
    from the film into pads 5 and 6 (µA), sampled every ``sample_dt_us``.
    """
    p = cfg["pattern"]
    if p["n_nodes"] != 6:
        raise ConfigurationError("the pattern layout has exactly 6 pads", "pattern.n_nodes")
    dt = p["sample_dt_us"]
    n_sub = int(round(p["step_us"] / dt))
    n_tail = int(round(p["tail_us"] / dt))
    if abs(n_sub * dt - p["step_us"]) > 1e-9 or n_sub < 1:
        raise ConfigurationError("step must be a multiple of the sampling interval", "pattern.step_us")
    v_pulse = cfg["encoding"]["v_pulse_v"]
    base = _array(cfg, 6, Mode.SPATIOTEMPORAL, x_init=np.full(6, cfg["device"]["x_rest_um"]), dt=dt)
    out = {}
    for name in PATTERN_ORDER:
        a = base
        cur = []
        ends = []
        for col in PATTERNS[name].pixels.T:
            frame = np.zeros(6)
            frame[:5] = v_pulse * col
            for _ in range(n_sub):
                a, c = step_array(a, frame)
                cur.append(-c[4:6])
            ends.append(len(cur) - 1)
        for _ in range(n_tail):
            a, c = step_array(a, np.zeros(6))
            cur.append(-c[4:6])
        cur = np.array(cur)
        t = (np.arange(len(cur)) + 1) * dt
        out[name] = (t, cur[:, 0], cur[:, 1], np.array(ends))
    return out


def pattern_demo(cfg) -> Outcome:
    p = cfg["pattern"]
    traj = pattern_trajectories(cfg)
    gain = p["gain_v_per_ua"]
    idx = (lambda e: e[-1:]) if p["features"] == "final" else (lambda e: e)
    feats = np.array([np.concatenate([traj[n][1][idx(traj[n][3])], traj[n][2][idx(traj[n][3])]])
                      for n in PATTERN_ORDER])
    volts = gain * feats
    labels = np.arange(len(PATTERN_ORDER))
    model = fit_readout(volts, labels, len(PATTERN_ORDER), ridge=p["ridge"])
    cb = quantize_to_crossbar(model, p["levels"])
    v_lin = cb.g_pos.v_lin
    if np.max(np.abs(volts)) > v_lin:
        raise OutOfLinearRangeError(
            f"output-layer voltage {np.max(np.abs(volts)):.4g} V exceeds the {v_lin} V read window; lower pattern.gain_v_per_ua"
        )
    columns = crossbar_mvm(cb, volts) * cb.scale + model.bias
    pred = np.argmax(columns, axis=1)
    confusion = np.zeros((4, 4), dtype=int)
    for t_, p_ in zip(labels, pred):
        confusion[t_, p_] += 1

    final = {n: float(traj[n][2][traj[n][3][-1]]) for n in PATTERN_ORDER}
    u, d = traj["U"][2], traj["D"][2]
    corr = float(np.corrcoef(u, d)[0, 1])
    gap = float(abs(d.max() - u.max()) / max(d.max(), u.max()))

    traj_tab = Table(["t_us"] + [f"{n}_{k}" for n in PATTERN_ORDER for k in ("i1_ua", "i2_ua")])
    t = traj["U"][0]
    for j in range(t.size):
        traj_tab.rows.append([t[j]] + [traj[n][k][j] for n in PATTERN_ORDER for k in (1, 2)])
    steps = [4] if p["features"] == "final" else list(range(5))
    volt_tab = Table(["pattern"] + [f"v_out1_step{k}" for k in steps] + [f"v_out2_step{k}" for k in steps])
    for n, row in zip(PATTERN_ORDER, volts):
        volt_tab.rows.append([n] + list(row))
    col_tab = Table(["pattern"] + [f"column_{n}" for n in PATTERN_ORDER] + ["predicted"])
    for n, row, k in zip(PATTERN_ORDER, columns, pred):
        col_tab.rows.append([n] + list(row) + [PATTERN_ORDER[k]])
    conf_tab = Table(["true"] + list(PATTERN_ORDER))
    for n, row in zip(PATTERN_ORDER, confusion):
        conf_tab.rows.append([n] + list(row))
    w_tab = Table(["row", "col", "g_pos_us", "g_neg_us", "weight_realized"])
    wr = cb.realized_weights()
    for (i, j), g in np.ndenumerate(cb.g_pos.conductance):
        w_tab.rows.append([i, j, float(g), float(cb.g_neg.conductance[i, j]), float(wr[i, j])])

    out = Outcome()
    out.metrics = {
        "correct": int(np.sum(pred == labels)),
        "final_i2_ua": final,
        "ud_correlation": corr,
        "ud_amplitude_gap": gap,
        "max_output_voltage_v": float(np.max(np.abs(volts))),
        "crossbar_levels": p["levels"],
    }
    out.checks = [
        Check("all_patterns_correct", bool(np.all(pred == labels)), int(np.sum(pred == labels)), 4),
        Check("s_max_final_current", max(final, key=final.get) == "S", max(final, key=final.get)),
        Check("ud_similar_shape", corr > p["min_correlation"], corr, p["min_correlation"]),
        Check("ud_amplitude_distinct", gap > p["min_amplitude_gap"], gap, p["min_amplitude_gap"]),
    ]
    out.tables = {
        "trajectories.csv": traj_tab,
        "voltages.csv": volt_tab,
        "column_currents.csv": col_tab,
        "confusion.csv": conf_tab,
        "crossbar.csv": w_tab,
    }
    return out


# --- classify ---------------------------------------------------------------


def benchmark_spikes(cfg):
    """``(spikes (B, C, T), labels)`` from the manifest or the generator."""
    task = cfg["task"]
    if task["manifest"] is not None:
        clips = load_clips(task["manifest"])
        theta = cfg["encoding"]["theta"]
        spikes = np.stack([threshold_encode(c, theta).spikes for c in clips])
        labels = np.array([c.label for c in clips])
    else:
        g = dict(task["generator"])
        if g["seed"] is None:
            g["seed"] = cfg["seed"]
        clips = synth_benchmark(**g)
        spikes = np.stack([c.data for c in clips]).astype(np.uint8)
        labels = np.array([c.label for c in clips])
    return spikes, labels


def mode_sweep(cfg, spikes, labels, modes, n_samples):
    """k-fold reports keyed by ``(mode, n_sample)``."""
    n_ch = spikes.shape[1]
    n_nodes = cfg["array"]["n_nodes"]
    if n_nodes != 2 * n_ch:
        raise ConfigurationError(f"{n_ch} input channels need {2 * n_ch} nodes, configured {n_nodes}",
                                 "array.n_nodes")
    r = cfg["readout"]
    enc = cfg["encoding"]
    base = _array(cfg, n_nodes, Mode.SPATIOTEMPORAL)
    reports = {}
    for mode in modes:
        a = set_mode(base, mode)
        for ns in n_samples:
            sched = sample_schedule(spikes.shape[2], ns)
            X = run_batch(a, spikes, sched, v_pulse=enc["v_pulse_v"], pulse_width=enc["pulse_width_us"])
            reports[(mode, ns)] = kfold_cv(X, labels, r["k"], r["cv_seed"], ridge=r["ridge"], levels=r["levels"])
    return reports


def classify(cfg) -> Outcome:
    spikes, labels = benchmark_spikes(cfg)
    modes = list(cfg["task"]["modes"])
    n_samples = list(cfg["schedule"]["n_sample"])
    reports = mode_sweep(cfg, spikes, labels, modes, n_samples)
    acc_tab = Table(["mode", "n_sample", "mean_accuracy", "quantized_mean_accuracy"])
    fold_tab = Table(["mode", "n_sample", "fold", "size", "accuracy", "quantized_accuracy"])
    table = {}
    for (mode, ns), rep in reports.items():
        q = rep.quantized_accuracies
        qmean = float(np.mean(q)) if q is not None else float("nan")
        acc_tab.rows.append([mode, ns, rep.mean, qmean])
        for k, a_ in enumerate(rep.fold_accuracies):
            fold_tab.rows.append([mode, ns, k, rep.fold_sizes[k], a_, q[k] if q is not None else ""])
        table.setdefault(mode, {})[str(ns)] = rep.mean
    out = Outcome(tables={"accuracy.csv": acc_tab, "folds.csv": fold_tab})
    enc = cfg["encoding"]
    clip_nj = energy_per_clip(_array(cfg, cfg["array"]["n_nodes"], Mode.SPATIOTEMPORAL), spikes,
                              v_pulse=enc["v_pulse_v"], pulse_width=enc["pulse_width_us"])
    out.metrics = {
        "accuracy": table,
        "n_clips": int(labels.size),
        "n_channels": int(spikes.shape[1]),
        "energy_nj": {"per_clip_mean": float(clip_nj.mean()), "per_frame_mean": float(clip_nj.mean() / spikes.shape[2])},
    }
    for mode in modes:
        seq = [reports[(mode, ns)].mean for ns in n_samples]
        out.checks.append(Check(f"{mode}_non_decreasing_in_n_sample", _is_non_decreasing(seq), seq))
    if {"bypass", "temporal-only", "spatiotemporal"} <= set(modes):
        gap_min = cfg["task"]["min_gap_pp"] / 100.0
        for ns in n_samples:
            st, to, by = (reports[(m, ns)].mean for m in ("spatiotemporal", "temporal-only", "bypass"))
            out.checks.append(Check(f"mode_ordering_n{ns}", st >= to >= by, [st, to, by]))
            out.checks.append(Check(f"spatiotemporal_gain_n{ns}", st - by >= gap_min - 1e-12, st - by, gap_min))
    return out


# --- seizure-demo -----------------------------------------------------------


def seizure_data(cfg):
    s = cfg["seizure"]
    if s["manifest"] is not None:
        clips = load_clips(s["manifest"])
    else:
        clips = synth_eeg(s["n_per_class"], s["n_channels"], s["fs_hz"], s["seconds"], s["seed"])
    return np.stack([c.data for c in clips]), np.array([c.label for c in clips])


def seizure_demo(cfg) -> Outcome:
    s, r = cfg["seizure"], cfg["readout"]
    data, labels = seizure_data(cfg)
    n_ch = data.shape[1]
    fs = s["fs_hz"]
    base = _array(cfg, 2 * n_ch, Mode.SPATIOTEMPORAL)
    enc = cfg["encoding"]

    def accuracy_for(mode, theta, horizon):
        n = int(round(fs * horizon))
        if not 1 <= n <= data.shape[2]:
            raise ConfigurationError(f"horizon {horizon} s outside the clip length", "seizure.horizons_s")
        spikes = (data[:, :, :n] > theta).astype(np.uint8)
        ns = max(1, int(round(s["samples_per_s"] * horizon)))
        X = run_batch(set_mode(base, mode), spikes, sample_schedule(n, ns),
                      v_pulse=enc["v_pulse_v"], pulse_width=enc["pulse_width_us"])
        return kfold_cv(X, labels, r["k"], r["cv_seed"], ridge=r["ridge"]).mean

    thetas = list(s["thetas"])
    sweep = [accuracy_for("spatiotemporal", th, s["theta_horizon_s"]) for th in thetas]
    best = int(np.argmax(sweep))
    theta = thetas[best]
    modes = list(cfg["task"]["modes"])
    horizons = list(s["horizons_s"])
    table = {m: [accuracy_for(m, theta, h) for h in horizons] for m in modes}

    sweep_tab = Table(["theta", "accuracy"], [[float(t), a] for t, a in zip(thetas, sweep)])
    hor_tab = Table(["mode", "horizon_s", "accuracy"])
    for m in modes:
        for h, a_ in zip(horizons, table[m]):
            hor_tab.rows.append([m, float(h), a_])
    out = Outcome(tables={"theta_sweep.csv": sweep_tab, "horizons.csv": hor_tab})
    out.metrics = {
        "theta": float(theta),
        "theta_sweep": dict(zip([f"{t:g}" for t in thetas], sweep)),
        "accuracy": {m: dict(zip([f"{h:g}" for h in horizons], v)) for m, v in table.items()},
    }
    out.checks.append(Check("theta_interior_maximum", 0 < best < len(thetas) - 1, float(theta)))
    if "spatiotemporal" in table:
        st = table["spatiotemporal"]
        out.checks.append(Check("longest_horizon_not_worse", st[int(np.argmax(horizons))] >= st[int(np.argmin(horizons))],
                                [st[int(np.argmin(horizons))], st[int(np.argmax(horizons))]]))
        if "bypass" in table:
            by = table["bypass"]
            out.checks.append(Check("spatiotemporal_beats_bypass", all(a_ >= b for a_, b in zip(st, by)), [st, by]))
    return out


# --- field-validate ---------------------------------------------------------


def field_geometry(cfg, rows=2, cols=3) -> ArrayGeometry:
    f = cfg["field"]
    return ArrayGeometry(
        rows=rows, cols=cols, pad=f["pad_um"], gap=f["gap_um"], ring=f["ring_um"], margin=f["margin_um"],
        cloud_reading=f["cloud_reading"], total_cloud_length=f["total_cloud_length_um"],
    )


def field_materials(cfg) -> Materials:
    f = cfg["field"]
    return Materials(rho_nno=f["rho_nno_ohm_m"], rho_hnno=f["rho_hnno_ohm_m"], thickness_nm=f["thickness_nm"])


def field_validate(cfg) -> Outcome:
    f = cfg["field"]
    mats = field_materials(cfg)
    suite = coupling_suite(field_geometry(cfg), f["h_um"], mats, f["v_pulse_v"], f["rtol"])
    lumped = neighbor_replica(
        Mode.SPATIOTEMPORAL, x_rest=cfg["device"]["x_rest_um"], params=_dyn(cfg),
        tau_film=cfg["device"]["tau_film_us"], dt=cfg["array"]["dt_us"], v_pulse=f["v_pulse_v"],
    )
    lumped_order = lumped["two"] > lumped["one"] > lumped["none"]
    positions = list(f["distance_positions"])
    sweep = distance_sweep(positions, field_geometry(cfg, 2, max(positions) + 1), f["h_um"], mats,
                           f["v_pulse_v"], f["rtol"])
    conservation = max(abs(float(np.sum(c))) / float(np.max(np.abs(c))) for c in suite.field_currents.values())

    out = Outcome()
    cur_tab = Table(["config", "electrode", "voltage_v", "field_current_a", "lumped_current_a"])
    for cfg_name in CONFIGS:
        for k, n in enumerate(suite.names):
            cur_tab.rows.append([cfg_name, n, suite.voltages[cfg_name][k], suite.field_currents[cfg_name][k],
                                 suite.lumped_currents[cfg_name][k]])
    dist_tab = Table(["position", "reference_current_a"], [[p, c] for p, c in zip(sweep.positions, sweep.currents)])
    dist_tab.rows.append(["baseline", sweep.baseline])
    rep_tab = Table(["config", "replica_read_current_ua", "field_reference_current_a", "film_mean_v"])
    for c in CONFIGS:
        rep_tab.rows.append([c, lumped[c], suite.reference_current("field", c), suite.film_means[c]])
    out.tables = {"currents.csv": cur_tab, "distance.csv": dist_tab, "ordering.csv": rep_tab}
    for c in CONFIGS:
        stride = f["map_stride"]
        out.matrices[f"potential_{c}.csv"] = suite.fields[c].potential[::stride, ::stride]

    mismatch = suite.max_relative_mismatch()
    out.metrics = {
        "max_lumped_field_mismatch": mismatch,
        "distance_spread_ratio": sweep.spread_ratio,
        "conservation": conservation,
        "film_mean_v": suite.film_means,
        "cg_iterations": {c: suite.fields[c].iterations for c in CONFIGS},
        "ring_width_um": field_geometry(cfg).ring_width,
    }
    out.checks = [
        Check("replica_ordering", lumped_order, [lumped[c] for c in CONFIGS]),
        Check("field_ordering", suite.ordering("field"), [suite.reference_current("field", c) for c in CONFIGS]),
        Check("potential_maps_ordered", suite.maps_ordered(), [suite.film_means[c] for c in CONFIGS]),
        Check("lumped_field_ordering_agree", suite.ordering("field") == lumped_order == suite.ordering("lumped")),
        Check("lumped_field_currents_match", mismatch < f["max_mismatch"], mismatch, f["max_mismatch"]),
        Check("distance_weak", sweep.spread_ratio < f["max_spread_ratio"], sweep.spread_ratio, f["max_spread_ratio"]),
        Check("pulsed_neighbor_above_baseline", bool(np.all(sweep.currents > sweep.baseline))),
        Check("current_conservation", conservation < 1e-6, conservation, 1e-6),
    ]
    if f["refine"]:
        fine = coupling_suite(field_geometry(cfg), f["h_um"] / 2, mats, f["v_pulse_v"], f["rtol"])
        change = max(
            float(np.max(np.abs(fine.field_currents[c] - suite.field_currents[c]) / np.abs(suite.field_currents[c])))
            for c in CONFIGS
        )
        out.metrics["refinement_change"] = change
        out.checks.append(Check("grid_converged", change < f["max_refine_change"], change, f["max_refine_change"]))
    return out


RECIPES = {
    "device-fit": device_fit,
    "pattern-demo": pattern_demo,
    "classify": classify,
    "seizure-demo": seizure_demo,
    "field-validate": field_validate,
}
