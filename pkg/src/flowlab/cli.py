"""Batch experiment runner.

Subcommands: flatfn, entropy, recurrence, timechange, dichotomy.  Every run
is a pure function of (config, seed): outputs are CSV and JSON files plus a
manifest, and rerunning with the same config and seed reproduces them byte
for byte (timings excepted, which live only in the manifest).

Exit codes: 0 success, 2 configuration rejected, 3 a divergence surfaced
where a finite value was required.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .dynamics import (
    ROTATION,
    BaseMap,
    SuspensionFlow,
    SuspensionPoint,
    TorusPoint,
    suspension_advance,
)
from .entropy import (
    EntropyGridSpec,
    entropy_estimate_flow,
    entropy_estimate_map,
    totoki_check,
)
from .errors import (
    ConfigError,
    DivergedDenominator,
    DivergedMeasure,
    IntegrandUnbounded,
    NotFoundWithinHorizon,
    NotInvertible,
)
from .recurrence import (
    ball_measure_bound_check,
    empirical_recurrence,
    recurrence_constant,
    recurrence_profile,
)
from .report import RunManifest, write_csv, write_json
from .sampling import (
    STREAM_BASE_CLOUD,
    STREAM_CHECKS,
    STREAM_DENSITY_SAMPLES,
    STREAM_GAMMA_SAMPLES,
    STREAM_HEIGHTS,
    STREAM_RECURRENCE,
    STREAM_WITNESS,
    birkhoff_cloud,
    rng_for,
    suspension_cloud,
)
from .speed import (
    build_flat_profile,
    constant_field,
    eta_derivative,
    eta_eval,
    flat_field_family,
    geometric_l_sequence,
    mollifier_h,
    quadratic_field,
)
from .timechange import (
    TimeChangedFlow,
    constant_clock,
    expected_gamma,
    flow_trajectories,
    orbit_equivalence_check,
    pushforward_density,
    tau,
    theta,
    time_changed_flow,
)

_DIVERGENCE_ERRORS = (
    DivergedDenominator,
    DivergedMeasure,
    IntegrandUnbounded,
    NotInvertible,
)


def _base_map_from(cfg: dict) -> BaseMap:
    kind = cfg["kind"]
    if kind == "toral_automorphism":
        if cfg.get("matrix") is None:
            raise ConfigError("base_map.matrix: required for a toral automorphism")
        return BaseMap(kind, matrix=tuple(tuple(r) for r in cfg["matrix"]))
    if kind == "rotation":
        if cfg.get("angles") is None:
            raise ConfigError("base_map.angles: required for a rotation")
        return BaseMap(kind, angles=tuple(cfg["angles"]))
    raise ConfigError(f"base_map.kind: unknown kind {kind!r}")


def _marked_point(config: ExperimentConfig, base_map: BaseMap) -> SuspensionPoint:
    mp = config.raw.get("marked_point")
    if mp is None:
        raise ConfigError("this command needs a 'marked_point' section")
    if len(mp["base"]) != base_map.dim:
        raise ConfigError("marked_point.base: dimension does not match the base map")
    return SuspensionPoint(TorusPoint(tuple(mp["base"])), mp["height"])


def _recurrence_lookup(base_map, spec, seed, manifest, max_index=80):
    spec = spec or {"mode": "auto", "orbit_length": 100000, "index_cap": 12}
    mode = spec["mode"]
    empirical = base_map.kind != ROTATION if mode == "auto" else mode == "empirical"
    profile = recurrence_profile(
        base_map,
        range(2, max_index),
        rng=rng_for(seed, STREAM_RECURRENCE),
        empirical=empirical,
        orbit_length=spec["orbit_length"],
        empirical_index_cap=spec["index_cap"],
    )
    if empirical:
        manifest.warn(
            "uncertified recurrence: L(1/i) measured empirically along one orbit"
            f" and held constant beyond index {spec['index_cap']}"
        )
    manifest.add_derived("L_values", {str(k): v for k, v in profile.items()})
    return lambda i: profile.get(i, profile[max(profile)])


def _grid_spec(cfg: dict) -> EntropyGridSpec:
    return EntropyGridSpec(
        n_values=tuple(cfg["n_values"]),
        eps_values=tuple(cfg["eps_values"]),
        delta=cfg["delta"],
        method=cfg["method"],
        fit_fraction=cfg["fit_fraction"],
        fit_skip_initial=cfg["fit_skip_initial"],
    )


def _field_from(cfg: dict, base_map: BaseMap, p: SuspensionPoint, L_lookup):
    kind = cfg["kind"]
    if kind == "constant":
        return constant_field(cfg["value"])
    if kind == "quadratic":
        return quadratic_field(base_map, p, cfg["chart_radius"])
    if kind == "flat":
        return flat_field_family(
            base_map,
            p,
            cfg["chart_radius"],
            L_lookup,
            cfg["index"],
            l_scale=cfg["l_scale"],
            l_ratio=cfg["l_ratio"],
            n_shells=cfg["n_shells"],
        )
    raise ConfigError(f"field.kind: unknown kind {kind!r}")


def _emit_grid(est, path, manifest):
    write_csv(
        path,
        ("delta", "n", "eps", "count", "method"),
        est.grid.to_csv_rows(),
    )
    manifest.add_output(path)


def _emit_estimate(est, path, manifest):
    write_json(path, est.to_json_dict())
    manifest.add_output(path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_flatfn(config: ExperimentConfig, out: Path, seed: int, workers: int, manifest: RunManifest):
    cfg = config.section("flatfn")
    base_map = _base_map_from(config["base_map"])
    L_lookup = _recurrence_lookup(base_map, cfg["recurrence"], seed, manifest)
    profile = build_flat_profile(
        L_lookup,
        geometric_l_sequence(cfg["l_scale"], cfg["l_ratio"]),
        cfg["index"],
        n_shells=cfg["n_shells"],
    )
    manifest.add_derived("betas", list(profile.betas))
    manifest.add_derived("l_sequence", profile.provenance["l_values"])

    path = out / "profile.json"
    write_json(path, profile.to_json_dict())
    manifest.add_output(path)

    ts = np.concatenate([
        np.linspace(-1.0, 0.0, 21),
        np.geomspace(1e-8, 2.0, 160),
    ])
    rows = []
    for t in ts:
        row = [t, eta_eval(profile, float(t))]
        row += [eta_derivative(profile, float(t), k) for k in range(1, cfg["derivative_orders"] + 1)]
        rows.append(row)
    path = out / "eta_table.csv"
    write_csv(path, ("t", "eta", "d1", "d2", "d3", "d4")[: 2 + cfg["derivative_orders"]], rows)
    manifest.add_output(path)

    h1 = mollifier_h(1.0)
    shell_rows = []
    for k in range(cfg["shell_count"]):
        edge = 1.0 / (k + 2)
        tt = np.geomspace(1e-6 * edge, edge * (1 - 1e-9), cfg["points_per_shell"])
        max_eta = float(np.max(eta_eval(profile, tt)))
        bound = profile.beta(k) * h1 / 2.0**k
        shell_rows.append((k, edge, max_eta, bound, max_eta < bound))
    path = out / "shell_table.csv"
    write_csv(path, ("k", "shell_edge", "max_eta", "bound", "pass"), shell_rows)
    manifest.add_output(path)
    if not all(r[-1] for r in shell_rows):
        manifest.warn("shell bound violated; profile construction is inconsistent")

    deriv_rows = []
    for k in range(1, cfg["derivative_orders"] + 1):
        for j in range(1, 5):
            t = 10.0**-j
            deriv_rows.append((k, j, t, abs(eta_derivative(profile, t, k))))
    path = out / "derivative_table.csv"
    write_csv(path, ("order", "j", "t", "abs_value"), deriv_rows)
    manifest.add_output(path)
    return 0


def cmd_entropy(config: ExperimentConfig, out: Path, seed: int, workers: int, manifest: RunManifest):
    cfg = config.section("entropy")
    base_map = _base_map_from(config["base_map"])
    sampling = config.section("sampling")
    grid = _grid_spec(config.section("grid"))
    time_step = config.section("grid")["time_step"]
    flow = SuspensionFlow(base_map)

    for target in cfg["targets"]:
        if target == "map":
            with manifest.time_stage("map_estimate"):
                cloud = birkhoff_cloud(
                    base_map, sampling["cloud_size"], rng=rng_for(seed, STREAM_BASE_CLOUD),
                    burn_in=sampling["burn_in"], chains=sampling["chains"],
                )
                est = entropy_estimate_map(base_map, cloud, grid)
            _emit_grid(est, out / "map_grid.csv", manifest)
            _emit_estimate(est, out / "map_estimate.json", manifest)
        elif target in ("suspension", "time_changed"):
            coords, heights = suspension_cloud(
                base_map, sampling["cloud_size"],
                rng_base=rng_for(seed, STREAM_BASE_CLOUD),
                rng_height=rng_for(seed, STREAM_HEIGHTS),
                burn_in=sampling["burn_in"], chains=sampling["chains"],
            )
            if target == "suspension":
                run_flow = flow
            else:
                if cfg["field"] is None:
                    raise ConfigError("entropy.field: required for a time_changed target")
                p = _marked_point(config, base_map)
                L_lookup = _recurrence_lookup(base_map, None, seed, manifest)
                field = _field_from(cfg["field"], base_map, p, L_lookup)
                run_flow = time_changed_flow(flow, field)
            with manifest.time_stage(f"{target}_estimate"):
                est = entropy_estimate_flow(
                    run_flow, (coords, heights), grid, time_step, sub_step=cfg["sub_step"]
                )
            if est.diagnostics.get("dropped_singular_points"):
                manifest.warn(
                    f"{est.diagnostics['dropped_singular_points']} cloud points "
                    "excluded: trajectory entered the singular tolerance of p"
                )
            _emit_grid(est, out / f"{target}_grid.csv", manifest)
            _emit_estimate(est, out / f"{target}_estimate.json", manifest)
        else:
            raise ConfigError(f"entropy.targets: unknown target {target!r}")
    return 0


def cmd_recurrence(config: ExperimentConfig, out: Path, seed: int, workers: int, manifest: RunManifest):
    cfg = config.section("recurrence")
    base_map = _base_map_from(config["base_map"])
    rows = []
    ball_rows = []
    for eps in cfg["epsilons"]:
        try:
            rep = recurrence_constant(
                base_map, eps, eps * cfg["grid_resolution_factor"], horizon=cfg["horizon"]
            )
        except NotFoundWithinHorizon:
            manifest.warn(
                f"no uniform recurrence constant for eps={eps:g} (map is not minimal); "
                "reporting the uncertified empirical constant"
            )
            rep = empirical_recurrence(
                base_map, eps, orbit_length=min(cfg["horizon"], 200000),
                rng=rng_for(seed, STREAM_RECURRENCE),
            )
        rows.append((rep.epsilon, rep.L, rep.is_certified))
        if cfg["ball_check"] and rep.is_certified:
            centers = rng_for(seed, STREAM_CHECKS).random((cfg["ball_centers"], base_map.dim))
            chk = ball_measure_bound_check(
                base_map, eps, rep, centers,
                orbit_length=cfg["ball_orbit_length"], rng=rng_for(seed, STREAM_CHECKS),
            )
            for freq in chk.frequencies:
                ball_rows.append((eps, rep.L, chk.bound, freq, freq >= chk.bound))
    path = out / "recurrence.csv"
    write_csv(path, ("epsilon", "L", "certified"), rows)
    manifest.add_output(path)
    if ball_rows:
        path = out / "ball_measure.csv"
        write_csv(path, ("epsilon", "L", "bound", "frequency", "pass"), ball_rows)
        manifest.add_output(path)
    return 0


def cmd_timechange(config: ExperimentConfig, out: Path, seed: int, workers: int, manifest: RunManifest):
    cfg = config.section("timechange")
    base_map = _base_map_from(config["base_map"])
    flow = SuspensionFlow(base_map)
    p = _marked_point(config, base_map)
    L_lookup = _recurrence_lookup(base_map, None, seed, manifest)
    field = _field_from(cfg["field"], base_map, p, L_lookup)
    tc = time_changed_flow(flow, field)
    rng = rng_for(seed, STREAM_CHECKS)
    span = cfg["time_span"]

    residual_rows = []
    for _ in range(cfg["cocycle_samples"]):
        q = SuspensionPoint(TorusPoint(tuple(rng.random(base_map.dim))), float(rng.random()))
        s, t = span * rng.random(), span * rng.random()
        r = theta(tc.clock, q, s + t) - theta(tc.clock, q, s) - theta(
            tc.clock, suspension_advance(flow, q, s), t
        )
        residual_rows.append((q.height, s, t, abs(r)))
    path = out / "cocycle_residuals.csv"
    write_csv(path, ("height", "s", "t", "residual"), residual_rows)
    manifest.add_output(path)

    rt_rows = []
    for _ in range(cfg["roundtrip_samples"]):
        q = SuspensionPoint(TorusPoint(tuple(rng.random(base_map.dim))), float(rng.random()))
        s = span * rng.random()
        err = abs(tau(tc, q, theta(tc.clock, q, s)) - s)
        rt_rows.append((s, err))
    path = out / "tau_roundtrip.csv"
    write_csv(path, ("s", "abs_error"), rt_rows)
    manifest.add_output(path)

    const_rows = []
    q0 = SuspensionPoint(TorusPoint(tuple(0.37 for _ in range(base_map.dim))), 0.25)
    for c in (0.5, 1.0, 2.0):
        tc_c = TimeChangedFlow(constant_clock(flow, c))
        const_rows.append((c, theta(tc_c.clock, q0, 1.0), tau(tc_c, q0, 1.0)))
    path = out / "constant_clock.csv"
    write_csv(path, ("a", "theta_at_1", "tau_at_1"), const_rows)
    manifest.add_output(path)

    samples = birkhoff_cloud(
        base_map, cfg["gamma_samples"], rng=rng_for(seed, STREAM_GAMMA_SAMPLES), chains=32
    )
    rep = expected_gamma(field, samples, workers=workers)
    path = out / "gamma_trace.csv"
    write_csv(path, ("sample", "gamma"), list(enumerate(rep.trace)))
    manifest.add_output(path)
    manifest.add_derived("expected_gamma", None if rep.diverged else rep.value)
    manifest.add_derived("expected_gamma_diverged", rep.diverged)

    dcoords, dheights = suspension_cloud(
        base_map, cfg["density_samples"],
        rng_base=rng_for(seed, STREAM_DENSITY_SAMPLES),
        rng_height=rng_for(seed, STREAM_HEIGHTS), chains=64,
    )
    dens = pushforward_density(field, dcoords, dheights)
    path = out / "density_trace.csv"
    write_csv(path, ("sample", "reciprocal_speed"), list(enumerate(dens.trace)))
    manifest.add_output(path)
    manifest.add_derived("mass_estimate", None if dens.diverged else dens.value)
    manifest.add_derived("mass_diverged", dens.diverged)
    return 0


def cmd_dichotomy(config: ExperimentConfig, out: Path, seed: int, workers: int, manifest: RunManifest):
    cfg = config.section("dichotomy")
    base_map = _base_map_from(config["base_map"])
    if base_map.kind != "toral_automorphism" or base_map.dim < 2:
        raise ConfigError("dichotomy: base_map must be a toral automorphism with dim >= 2")
    if len(cfg["flat_indices"]) != len(cfg["horizons"]):
        raise ConfigError("dichotomy: flat_indices and horizons must have equal length")
    flow = SuspensionFlow(base_map)
    p = _marked_point(config, base_map)
    report: dict = {"stages_completed": []}

    def persist():
        write_json(out / "report.json", report)

    try:
        with manifest.time_stage("recurrence_profile"):
            L_lookup = _recurrence_lookup(base_map, cfg["recurrence"], seed, manifest)
        report["stages_completed"].append("recurrence_profile")
        persist()

        # reference estimates: suspension flow and the quadratic time change
        eps_values = tuple(cfg["eps_values"])
        ref_spec = EntropyGridSpec(
            n_values=(1, 2, 3, 4, 5, 6), eps_values=eps_values, fit_fraction=0.1
        )
        coords, heights = suspension_cloud(
            base_map, cfg["reference_cloud"],
            rng_base=rng_for(seed, STREAM_BASE_CLOUD),
            rng_height=rng_for(seed, STREAM_HEIGHTS), chains=256,
        )
        quad = quadratic_field(base_map, p, cfg["chart_radius_quadratic"])
        tc_quad = time_changed_flow(flow, quad)
        dcoords, dheights = suspension_cloud(
            base_map, cfg["density_samples"],
            rng_base=rng_for(seed, STREAM_DENSITY_SAMPLES),
            rng_height=rng_for(seed, STREAM_HEIGHTS), chains=64,
        )
        with manifest.time_stage("totoki"):
            tot = totoki_check(
                tc_quad, (coords, heights), ref_spec, cfg["time_step"],
                density_cloud=(dcoords, dheights), sub_step=cfg["sub_step"],
            )
        report["psi_estimate"] = tot.psi_estimate.extrapolated
        report["quadratic_estimate"] = tot.phi_estimate.extrapolated
        report["mass_estimate"] = tot.mass_estimate
        report["mass_drift"] = tot.mass_drift
        report["totoki_ratio"] = tot.ratio
        _emit_grid(tot.psi_estimate, out / "psi_grid.csv", manifest)
        _emit_grid(tot.phi_estimate, out / "quadratic_grid.csv", manifest)
        report["stages_completed"].append("reference_estimates")
        persist()

        # flat family: entropy decay along the diagonal horizon ladder
        ent_coords, ent_heights = suspension_cloud(
            base_map, cfg["entropy_cloud"],
            rng_base=rng_for(seed, STREAM_BASE_CLOUD),
            rng_height=rng_for(seed, STREAM_HEIGHTS), chains=128,
        )
        flat_est_rows = []
        report["flat_estimates"] = []
        for idx, horizon in zip(cfg["flat_indices"], cfg["horizons"]):
            fld = flat_field_family(
                base_map, p, cfg["chart_radius_entropy"], L_lookup, idx,
                l_scale=cfg["l_scale"], l_ratio=cfg["l_ratio"],
            )
            n_values = tuple(sorted({max(1, int(horizon * f)) for f in (0.25, 0.5, 0.75, 1.0)}))
            spec_i = EntropyGridSpec(
                n_values=n_values, eps_values=eps_values, fit_fraction=1.0
            )
            with manifest.time_stage(f"flat_entropy_{idx}"):
                est = entropy_estimate_flow(
                    time_changed_flow(flow, fld), (ent_coords, ent_heights),
                    spec_i, cfg["time_step"], sub_step=cfg["sub_step"],
                )
            if est.diagnostics.get("dropped_singular_points"):
                manifest.warn(
                    f"flat index {idx}: {est.diagnostics['dropped_singular_points']} "
                    "cloud points excluded near the singular fiber"
                )
            plateau = est.grid.counts[:, -1].max() / est.grid.core_size
            report["flat_estimates"].append(
                {"index": idx, "horizon": horizon, "estimate": est.extrapolated,
                 "plateau_fraction": plateau}
            )
            flat_est_rows.append((idx, horizon, est.extrapolated, plateau))
        path = out / "flat_entropy.csv"
        write_csv(path, ("index", "horizon", "estimate", "plateau_fraction"), flat_est_rows)
        manifest.add_output(path)
        report["stages_completed"].append("flat_entropy")
        persist()

        # gamma traces: divergence for the flat family, stability for quadratic
        gsamples = birkhoff_cloud(
            base_map, cfg["gamma_samples"], rng=rng_for(seed, STREAM_GAMMA_SAMPLES), chains=32
        )
        gamma_rows = []
        report["gamma_trace"] = []
        for idx in cfg["flat_indices"]:
            fld = flat_field_family(
                base_map, p, cfg["chart_radius_gamma"], L_lookup, idx,
                l_scale=cfg["l_scale"], l_ratio=cfg["l_ratio"],
            )
            rep = expected_gamma(fld, gsamples, workers=workers)
            gamma_rows.append((idx, rep.value if rep.value is not None else float("inf"), rep.diverged))
            report["gamma_trace"].append(
                {"index": idx, "mean": rep.value, "diverged": rep.diverged}
            )
        g_half = expected_gamma(quad, gsamples[: len(gsamples) // 2], workers=workers)
        g_full = expected_gamma(quad, gsamples, workers=workers)
        report["quadratic_gamma"] = {
            "half": g_half.value, "full": g_full.value,
            "drift": abs(g_full.value - g_half.value) / g_full.value,
        }
        path = out / "gamma_trace.csv"
        write_csv(path, ("index", "expected_gamma", "diverged"), gamma_rows)
        manifest.add_output(path)
        report["stages_completed"].append("gamma_trace")
        persist()

        # orbit equivalence witness between the mid-family flat flow and quadratic
        mid = cfg["flat_indices"][len(cfg["flat_indices"]) // 2]
        fld_mid = flat_field_family(
            base_map, p, cfg["chart_radius_entropy"], L_lookup, mid,
            l_scale=cfg["l_scale"], l_ratio=cfg["l_ratio"],
        )
        tc_flat = time_changed_flow(flow, fld_mid)
        wit_rng = rng_for(seed, STREAM_WITNESS)
        wcoords, wheights = suspension_cloud(
            base_map, 64, rng_base=wit_rng, rng_height=rng_for(seed, STREAM_WITNESS + 100),
            chains=16,
        )
        probe = np.arange(0.0, cfg["witness_horizon"] + 2.0, cfg["time_step"])
        wtraj = flow_trajectories(flow, wcoords, wheights, probe)
        witness_rows = []
        done = 0
        for i in range(wcoords.shape[0]):
            if done >= cfg["witness_points"]:
                break
            norms = fld_mid.chart_norms(
                wtraj.base_orbits[wtraj.k_index[:, i].astype(int), i],
                wtraj.heights[:, i].astype(float),
            )
            if norms.min() <= 0.75:
                continue  # the flat clock is not float-representable deeper in
            q = SuspensionPoint(TorusPoint(tuple(wcoords[i])), float(wheights[i]))
            table = orbit_equivalence_check(
                tc_flat, tc_quad, q, cfg["witness_horizon"], n_samples=10
            )
            for row in table.rows:
                witness_rows.append((done, row.s, row.t, row.mismatch))
            done += 1
        if done < cfg["witness_points"]:
            manifest.warn(
                f"only {done} of {cfg['witness_points']} witness points stayed clear "
                "of the stalled chart within the probe horizon"
            )
        path = out / "witness.csv"
        write_csv(path, ("point", "s", "t", "mismatch"), witness_rows)
        manifest.add_output(path)
        report["witness_points"] = done
        report["stages_completed"].append("witness")
        persist()
        manifest.add_output(out / "report.json")
        return 0
    except Exception:
        persist()
        manifest.add_output(out / "report.json")
        raise


# ---------------------------------------------------------------------------


_COMMANDS = {
    "flatfn": cmd_flatfn,
    "entropy": cmd_entropy,
    "recurrence": cmd_recurrence,
    "timechange": cmd_timechange,
    "dichotomy": cmd_dichotomy,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="flowlab",
        description="suspension flows, smooth time changes, and entropy estimates",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="path to the JSON config")
        sp.add_argument("--out", default=None, help="output directory (overrides config)")
        sp.add_argument("--seed", type=int, default=None, help="seed override")
        sp.add_argument("--workers", type=int, default=1)
    args = parser.parse_args(argv)

    try:
        config = ExperimentConfig.from_file(args.config)
        seed = config["seed"] if args.seed is None else args.seed
        config.raw["seed"] = seed
        out = Path(args.out if args.out is not None else config["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(args.command, config.raw, args.workers)
        code = _COMMANDS[args.command](config, out, seed, args.workers, manifest)
        manifest.write(out)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _DIVERGENCE_ERRORS as exc:
        try:
            manifest.warn(f"aborted: {type(exc).__name__}: {exc}")
            manifest.write(out)
        except Exception:
            pass
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
