"""Command-line pipeline around the library.

Subcommands mirror the stages: ``identify`` (dataset, noise floor, feasible
set), ``alpha`` (scenario campaign for the inflation factor), ``synthesize``
(controller SDP, feedforward or integral action), ``evaluate`` (closed-loop
trajectories, FIT, stability audit, Bode tables) and ``full`` (all stages in
dependency order).  Every stage writes JSON/CSV artifacts plus rendered PNG
figures into the output directory, chained by SHA-256 provenance hashes;
identical configs and seeds give byte-identical numeric artifacts.

Exit codes: 0 success, 2 infeasible or failed synthesis, 3 closed loop
diverged, 4 invalid input or configuration.
"""

from __future__ import annotations

import argparse
import copy
import json
import pathlib
import sys
from typing import Dict, Optional, Tuple

import numpy as np
import yaml

from . import report
from .evaluation import (
    ReferenceProfile,
    bode_comparison,
    fit_index,
    reference_model_response,
    robust_stability_check,
    simulate_closed_loop_ei,
    simulate_closed_loop_ff,
)
from .lti import TransferFunction, theta_to_state_space, augment_integrator, zoh_discretize
from .presets import EXAMPLE_PLANTS, REFERENCE_MODELS, step_profile_pieces
from .scenario import (
    ScenarioSpec,
    fit_theta_distribution,
    run_alpha_campaign,
    sample_scenarios,
    scenario_alpha,
    validate_alpha,
)
from .signals import Dataset, build_regressors, collect_dataset, estimate_ar_spectrum, read_dataset, write_dataset
from .sm import (
    FeasibleParameterSet,
    OmegaBox,
    VertexCapExceeded,
    box_fps,
    build_fps,
    enumerate_vertices,
    estimate_error_bound,
    membership,
    oriented_box_fps,
    vertex_matrices,
)
from .conic import check_feasibility, solve_sdp
from .synth_ei import EIController, assemble_ei_sdp, build_ei_data, extract_ei_controller, vrft_cost_ei
from .synth_ff import (
    FFController,
    assemble_ff_sdp,
    build_ff_data,
    design_filter,
    estimate_static_gain,
    extract_ff_controller,
    vrft_cost_ff,
)

__all__ = ["main", "load_config", "ConfigError"]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


DEFAULTS: Dict = {
    "example": None,
    "plant": None,
    "N_d": 500,
    "dbar": 0.1,
    "input": {"low": -10.0, "high": 10.0, "clock": 1, "seed": 17},
    "seeds": {"noise1": 101, "noise2": 202, "scenario": 1000, "eval": 31},
    "omega_box": {"radius": 10.0},
    "scenario": {"epsilon": 0.1, "beta": 1e-6, "p": 5, "M_cap": 1e6, "validate": True},
    "sm": {"alpha": None, "vertex_cap": 5000},
    "reference_model": {"name": "M30"},
    "weighting": None,
    "spectral": {"ar_order": None},
    "synthesis": {"mode": "ff", "relax_weight": 1e6, "mu": None, "vertex_budget": 256},
    "evaluation": {"interval_scale": 1.0, "with_noise": True, "bode_points": 200},
}


def _merge(base: Dict, override: Dict) -> Dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | pathlib.Path) -> Dict:
    """Read a YAML config, merge with defaults, and validate the basics."""
    path = pathlib.Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = _merge(DEFAULTS, raw)
    if cfg["example"] is None and cfg["plant"] is None:
        raise ConfigError("config must set either 'example' or an explicit 'plant'")
    if cfg["example"] is not None and cfg["example"] not in EXAMPLE_PLANTS:
        raise ConfigError(
            f"unknown example {cfg['example']!r}; choose from {sorted(EXAMPLE_PLANTS)}"
        )
    if int(cfg["N_d"]) < 8:
        raise ConfigError("N_d is too small to identify anything")
    if float(cfg["dbar"]) <= 0.0:
        raise ConfigError("dbar must be positive")
    return cfg


def apply_seed_override(cfg: Dict, seed: Optional[int]) -> Dict:
    """Derive all stage seeds from one master seed (CLI --seed flag)."""
    if seed is None:
        return cfg
    cfg = copy.deepcopy(cfg)
    cfg["seeds"] = {
        "noise1": seed + 1,
        "noise2": seed + 2,
        "scenario": seed + 1000,
        "eval": seed + 31,
    }
    cfg["input"]["seed"] = seed + 3
    return cfg


def resolve_plant(cfg: Dict) -> Tuple[np.ndarray, int, float]:
    """True plant parameter vector, order and sample time from the config."""
    if cfg["example"] is not None:
        p = EXAMPLE_PLANTS[cfg["example"]]
        theta = zoh_discretize(p.num_s, p.den_s, p.Ts)
        return theta, p.n, p.Ts
    p = cfg["plant"]
    for key in ("num_s", "den_s", "Ts"):
        if key not in p:
            raise ConfigError(f"plant section missing {key!r}")
    theta = zoh_discretize(p["num_s"], p["den_s"], float(p["Ts"]))
    return theta, theta.size // 2, float(p["Ts"])


def resolve_reference_model(cfg: Dict) -> TransferFunction:
    rm = cfg["reference_model"]
    if "name" in rm and rm["name"]:
        if rm["name"] not in REFERENCE_MODELS:
            raise ConfigError(
                f"unknown reference model {rm['name']!r}; choose from {sorted(REFERENCE_MODELS)}"
            )
        return REFERENCE_MODELS[rm["name"]]
    if "a1" not in rm or "b1" not in rm:
        raise ConfigError("reference_model needs 'name' or explicit 'a1'/'b1'")
    M = TransferFunction.first_order(float(rm["a1"]), float(rm["b1"]))
    if not M.is_stable():
        raise ConfigError("reference model must be stable (|a1| < 1)")
    return M


def resolve_weighting(cfg: Dict) -> Optional[TransferFunction]:
    w = cfg["weighting"]
    if w is None:
        return None
    return TransferFunction(w.get("num", [1.0]), w.get("den", [1.0]))


def _ar_order(cfg: Dict) -> int:
    v = (cfg.get("spectral") or {}).get("ar_order")
    if v is not None:
        return int(v)
    if cfg["example"] is not None:
        return EXAMPLE_PLANTS[cfg["example"]].ar_order
    return 5


def ensure_dataset(cfg: Dict, out: pathlib.Path) -> Tuple[Dataset, pathlib.Path]:
    """Load the experiment from the output directory or collect and write it."""
    path = out / "dataset.csv"
    if path.exists():
        return read_dataset(path), path
    theta, n, Ts = resolve_plant(cfg)
    ds = collect_dataset(
        theta,
        int(cfg["N_d"]),
        float(cfg["dbar"]),
        Ts,
        input_low=float(cfg["input"]["low"]),
        input_high=float(cfg["input"]["high"]),
        input_seed=int(cfg["input"]["seed"]),
        noise_seeds=(int(cfg["seeds"]["noise1"]), int(cfg["seeds"]["noise2"])),
        clock=int(cfg["input"]["clock"]),
    )
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, path)
    return ds, path


def _omega(cfg: Dict, n: int) -> OmegaBox:
    return OmegaBox.symmetric(2 * n, float(cfg["omega_box"]["radius"]))


def _resolve_alpha(cfg: Dict, out: pathlib.Path, flag: Optional[float]) -> Tuple[float, str]:
    if flag is not None:
        return float(flag), "flag"
    alpha_path = out / "alpha.json"
    if alpha_path.exists():
        doc = json.loads(alpha_path.read_text())
        return float(doc["alpha_star"]), "campaign"
    if cfg["sm"]["alpha"] is not None:
        return float(cfg["sm"]["alpha"]), "config"
    return 1.0, "default"


# -- subcommands ------------------------------------------------------------

def cmd_identify(cfg: Dict, out: pathlib.Path, alpha_flag: Optional[float] = None) -> int:
    ds, ds_path = ensure_dataset(cfg, out)
    theta_true, n, Ts = resolve_plant(cfg)
    Phi, ynext = build_regressors(ds.y1, ds.u, n)
    omega = _omega(cfg, n)
    lam_lb, theta_lp = estimate_error_bound(Phi, ynext, omega, ds.dbar)
    alpha, alpha_source = _resolve_alpha(cfg, out, alpha_flag)
    fps = build_fps(Phi, ynext, alpha, lam_lb, ds.dbar, omega)
    cap = int(cfg["sm"]["vertex_cap"])
    try:
        fps = enumerate_vertices(fps, cap=cap)
        route = "exact"
    except VertexCapExceeded as exc:
        print(f"identify: {exc}; falling back to the outer box")
        fps = box_fps(fps)
        route = "outer_box"
    inside, margin = membership(fps, theta_true)
    doc = {
        "n": n,
        "Ts": Ts,
        "alpha": alpha,
        "alpha_source": alpha_source,
        "lam_lb": lam_lb,
        "dbar": ds.dbar,
        "omega_radius": float(cfg["omega_box"]["radius"]),
        "route": route,
        "n_rows": int(fps.n_rows),
        "n_vertices": int(fps.vertices.shape[0]),
        "A": fps.A,
        "b": fps.b,
        "vertices": fps.vertices,
        "active_counts": fps.active_counts,
        "theta_lp": theta_lp,
        "true_theta_inside": bool(inside),
        "true_theta_margin": margin,
        "provenance": report.provenance(dataset=ds_path),
    }
    report.write_json(out / "fps.json", doc)
    print(
        f"identify: lam_lb={lam_lb:.6g} alpha={alpha:.6g} ({alpha_source}) "
        f"route={route} vertices={fps.vertices.shape[0]}"
    )
    return 0


def cmd_alpha(cfg: Dict, out: pathlib.Path) -> int:
    ds, ds_path = ensure_dataset(cfg, out)
    theta_true, n, Ts = resolve_plant(cfg)
    Phi, ynext = build_regressors(ds.y1, ds.u, n)
    omega = _omega(cfg, n)
    dist = fit_theta_distribution(Phi, ynext)
    sc = cfg["scenario"]
    spec = ScenarioSpec(
        epsilon=float(sc["epsilon"]), beta=float(sc["beta"]),
        p=int(sc["p"]), M_cap=float(sc["M_cap"]),
    )
    N = spec.sample_size()
    base_seed = int(cfg["seeds"]["scenario"])
    try:
        alpha_star, outcomes, removed = run_alpha_campaign(
            ds.u, n, ds.dbar, omega, dist, spec, base_seed
        )
    except RuntimeError as exc:
        print(f"alpha: campaign failed: {exc}")
        return 2
    validation_fraction = None
    if sc["validate"]:
        fresh = sample_scenarios(dist, N, ds.dbar, ds.u.size, base_seed + N)
        fresh_alphas = [
            scenario_alpha(s.theta, s.d, ds.u, n, ds.dbar, omega,
                           M_cap=spec.M_cap, index=s.index).alpha
            for s in fresh
        ]
        validation_fraction = validate_alpha(fresh_alphas, alpha_star)
    alphas = np.array([o.alpha for o in outcomes])
    case_counts = {c: int(sum(o.case == c for o in outcomes))
                   for c in ("ratio", "consistent", "capped")}
    doc = {
        "epsilon": spec.epsilon,
        "beta": spec.beta,
        "p": spec.p,
        "M_cap": spec.M_cap,
        "N": N,
        "base_seed": base_seed,
        "alpha_star": alpha_star,
        "removed": removed,
        "case_counts": case_counts,
        "validation_fraction": validation_fraction,
        "validation_count": N if sc["validate"] else 0,
        "provenance": report.provenance(dataset=ds_path),
    }
    report.write_json(out / "alpha.json", doc)
    report.write_table(
        out / "alphas.csv",
        ["index", "alpha", "lam_lb", "lam_hat_max", "case"],
        [
            np.array([o.index for o in outcomes]),
            np.array([o.alpha for o in outcomes]),
            np.array([o.lam_lb for o in outcomes]),
            np.array([o.lam_hat_max for o in outcomes]),
            np.array([o.case for o in outcomes]),
        ],
    )
    report.render_alphas(out / "alphas.png", alphas, alpha_star, removed)
    msg = f"alpha: N={N} alpha_star={alpha_star:.6g}"
    if validation_fraction is not None:
        msg += f" validation_violation={100 * validation_fraction:.4g}%"
    print(msg)
    return 0


def _load_fps(out: pathlib.Path) -> Tuple[FeasibleParameterSet, pathlib.Path]:
    path = out / "fps.json"
    if not path.exists():
        raise ConfigError(f"missing feasible-set artifact {path}; run identify first")
    doc = json.loads(path.read_text())
    omega = OmegaBox.symmetric(2 * int(doc["n"]), float(doc["omega_radius"]))
    A = np.asarray(doc["A"], dtype=float)
    fps = FeasibleParameterSet(
        A=A,
        b=np.asarray(doc["b"], dtype=float),
        alpha=float(doc["alpha"]),
        lam_lb=float(doc["lam_lb"]),
        dbar=float(doc["dbar"]),
        omega=omega,
        rows_box=np.zeros(A.shape[0], dtype=bool),
        vertices=np.asarray(doc["vertices"], dtype=float),
        active_counts=np.asarray(doc["active_counts"], dtype=int),
        from_outer_box=doc["route"] == "outer_box",
    )
    return fps, path


def cmd_synthesize(cfg: Dict, out: pathlib.Path, mode: str) -> int:
    ds, ds_path = ensure_dataset(cfg, out)
    theta_true, n, Ts = resolve_plant(cfg)
    try:
        fps, fps_path = _load_fps(out)
    except ConfigError as exc:
        print(f"synthesize: {exc}")
        return 4
    M = resolve_reference_model(cfg)
    W = resolve_weighting(cfg)
    # the filter's spectral factor comes from the measured output of the
    # first experiment, not the excitation input
    Z = estimate_ar_spectrum(ds.y1, _ar_order(cfg))
    F = design_filter(M, Z, W)
    relax_weight = float(cfg["synthesis"]["relax_weight"])
    # one stability block per vertex gets expensive; past the budget, certify
    # on the corners of the oriented bounding box instead (a superset of the
    # FPS, so the certificate still covers every admissible model)
    budget = int(cfg["synthesis"]["vertex_budget"])
    certificate = "fps_vertices"
    cert_fps = fps
    if fps.vertices.shape[0] > budget:
        cert_fps = oriented_box_fps(fps)
        certificate = "oriented_box"
    mats = vertex_matrices(cert_fps)
    try:
        if mode == "ff":
            mu = cfg["synthesis"]["mu"]
            mu_source = "config"
            if mu is None:
                Phi, ynext = build_regressors(ds.y1, ds.u, n)
                mu = estimate_static_gain(Phi, ynext)
                mu_source = "least_squares"
            if abs(float(mu)) < 1e-12:
                print("synthesize: plant static gain is zero; feedforward mode impossible")
                return 2
            rho = 1.0 / float(mu)
            data = build_ff_data(ds, M, F, rho)
            sdp = assemble_ff_sdp(data, mats, relax_weight)
        else:
            _, _, C = theta_to_state_space(fps.vertices[0])
            aug = [augment_integrator(A_i, B_i, C) for A_i, B_i in mats]
            data = build_ei_data(ds, M, F)
            sdp = assemble_ei_sdp(data, aug, relax_weight)
    except np.linalg.LinAlgError as exc:
        print(f"synthesize: data matrices are singular: {exc}")
        return 2
    rep = solve_sdp(sdp)
    if rep.status not in ("optimal", "inaccurate"):
        print(f"synthesize: SDP {rep.status} ({rep.message})")
        return 2
    ok, margins = check_feasibility(sdp, rep.assignment)
    try:
        if mode == "ff":
            ctrl = extract_ff_controller(rep.assignment, data, Ts)
            J_direct = vrft_cost_ff(ds, M, F, rho, ctrl.K)
            gains = {"K": ctrl.K, "f_K": ctrl.f_K, "rho": ctrl.rho,
                     "mu": float(mu), "mu_source": mu_source}
        else:
            ctrl = extract_ei_controller(rep.assignment, data, Ts)
            J_direct = vrft_cost_ei(ds, M, F, ctrl.K, ctrl.g)
            gains = {"K": ctrl.K, "g": ctrl.g}
    except RuntimeError as exc:
        print(f"synthesize: {exc}")
        return 2
    doc = {
        "mode": mode,
        "n": n,
        "Ts": Ts,
        **gains,
        "filter_num": F.num,
        "filter_den": F.den,
        "reference_model_num": M.num,
        "reference_model_den": M.den,
        "relax_weight": relax_weight,
        "solver": rep.solver,
        "solver_status": rep.status,
        "solver_tol": rep.solver_tol,
        "objective": rep.objective,
        "diagnostics": ctrl.diagnostics,
        "cost_direct": J_direct,
        "feasibility_check": {"passed": bool(ok), "min_margin": min(margins.values())},
        "certificate": certificate,
        "n_vertices": len(mats),
        "n_fps_vertices": int(fps.vertices.shape[0]),
        "provenance": report.provenance(dataset=ds_path, fps=fps_path),
    }
    report.write_json(out / f"controller_{mode}.json", doc)
    print(
        f"synthesize[{mode}]: status={rep.status} objective={rep.objective:.6g} "
        f"cost={J_direct:.6g} check={'pass' if ok else 'FAIL'}"
    )
    return 0


def _load_controller(out: pathlib.Path, mode: str):
    path = out / f"controller_{mode}.json"
    if not path.exists():
        raise ConfigError(f"missing controller artifact {path}; run synthesize first")
    doc = json.loads(path.read_text())
    if mode == "ff":
        ctrl = FFController(
            K=np.asarray(doc["K"], dtype=float),
            f_K=float(doc["f_K"]),
            rho=float(doc["rho"]),
            n=int(doc["n"]),
            Ts=float(doc["Ts"]),
        )
    else:
        ctrl = EIController(
            K=np.asarray(doc["K"], dtype=float),
            g=float(doc["g"]),
            n=int(doc["n"]),
            Ts=float(doc["Ts"]),
        )
    return ctrl, path


def cmd_evaluate(cfg: Dict, out: pathlib.Path, mode: str) -> int:
    theta_true, n, Ts = resolve_plant(cfg)
    try:
        ctrl, ctrl_path = _load_controller(out, mode)
        fps, fps_path = _load_fps(out)
    except ConfigError as exc:
        print(f"evaluate: {exc}")
        return 4
    ds_path = out / "dataset.csv"
    M = resolve_reference_model(cfg)
    profile = ReferenceProfile(
        step_profile_pieces(float(cfg["evaluation"]["interval_scale"])), Ts
    )
    ref = profile.series()
    y_target = reference_model_response(M, ref)
    d = None
    if cfg["evaluation"]["with_noise"]:
        d = np.random.default_rng(int(cfg["seeds"]["eval"])).uniform(
            -float(cfg["dbar"]), float(cfg["dbar"]), ref.size
        )
    sim = simulate_closed_loop_ff if mode == "ff" else simulate_closed_loop_ei
    run = sim(theta_true, ctrl, ref, d)
    audit = robust_stability_check(
        fps.vertices, ctrl, n_combos=100,
        seed=int(cfg["seeds"]["eval"]) + 1, extra=[theta_true],
    )
    fit = None if run.diverged else fit_index(run.y, y_target)
    bode = bode_comparison(theta_true, ctrl, M, int(cfg["evaluation"]["bode_points"]))
    k = np.arange(ref.size)
    t = k * Ts
    if not run.diverged:
        report.write_table(
            out / f"trajectories_{mode}.csv",
            ["k", "t", "ref", "y_target", "y", "u", "e"],
            [k, t, ref, y_target, run.y, run.u, run.e],
        )
        report.render_trajectory(
            out / f"trajectory_{mode}.png", t, ref, y_target, run.y, run.u,
            title=f"closed-loop tracking ({mode})",
        )
    report.write_table(
        out / f"bode_{mode}.csv",
        ["omega", "freq_hz", "mag_closed_loop", "mag_model",
         "phase_closed_loop", "phase_model"],
        [bode["omega"], bode["omega"] / (2 * np.pi * Ts), bode["mag_closed_loop"],
         bode["mag_model"], bode["phase_closed_loop"], bode["phase_model"]],
    )
    report.render_bode(
        out / f"bode_{mode}.png", bode["omega"], bode["mag_closed_loop"],
        bode["mag_model"], bode["phase_closed_loop"], bode["phase_model"], Ts,
    )
    parents = {"controller": ctrl_path, "fps": fps_path}
    if ds_path.exists():
        parents["dataset"] = ds_path
    doc = {
        "mode": mode,
        "fit": fit,
        "diverged": bool(run.diverged),
        "k_diverged": run.k_diverged,
        "max_spectral_radius": audit.max_radius,
        "robustly_stable": bool(audit.stable),
        "true_plant_radius": float(audit.extra_radii[0]),
        "n_vertices": int(fps.vertices.shape[0]),
        "with_noise": bool(cfg["evaluation"]["with_noise"]),
        "config": cfg,
        "provenance": report.provenance(**parents),
    }
    report.write_json(out / f"summary_{mode}.json", doc)
    if run.diverged:
        print(f"evaluate[{mode}]: closed loop DIVERGED at step {run.k_diverged}")
        return 3
    print(
        f"evaluate[{mode}]: FIT={fit:.4f} max_radius={audit.max_radius:.6f} "
        f"stable={audit.stable}"
    )
    return 0


def cmd_full(cfg: Dict, out: pathlib.Path, mode: str) -> int:
    rc = cmd_alpha(cfg, out)
    if rc != 0:
        return rc
    rc = cmd_identify(cfg, out)
    if rc != 0:
        return rc
    rc = cmd_synthesize(cfg, out, mode)
    if rc != 0:
        return rc
    return cmd_evaluate(cfg, out, mode)


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="smvrft",
        description="set-membership VRFT controller synthesis pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "identify": "collect data, estimate the noise floor, build the feasible set",
        "alpha": "scenario campaign for the inflation factor",
        "synthesize": "solve the controller SDP",
        "evaluate": "closed-loop simulation, FIT, stability audit, Bode tables",
        "full": "run every stage in dependency order",
    }
    for name, help_text in specs.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--out", default="out", help="artifact directory")
        sp.add_argument("--seed", type=int, default=None,
                        help="master seed overriding all configured seeds")
        if name == "identify":
            sp.add_argument("--alpha", type=float, default=None,
                            help="inflation factor override")
        if name in ("synthesize", "evaluate", "full"):
            sp.add_argument("--mode", choices=["ff", "ei"], default=None,
                            help="controller structure (default from config)")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 4
    cfg = apply_seed_override(cfg, args.seed)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mode = getattr(args, "mode", None) or cfg["synthesis"]["mode"]
    if mode not in ("ff", "ei"):
        print(f"config error: unknown synthesis mode {mode!r}", file=sys.stderr)
        return 4
    try:
        if args.command == "identify":
            return cmd_identify(cfg, out, alpha_flag=args.alpha)
        if args.command == "alpha":
            return cmd_alpha(cfg, out)
        if args.command == "synthesize":
            return cmd_synthesize(cfg, out, mode)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, out, mode)
        return cmd_full(cfg, out, mode)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
