"""Experiment grid runner: config parsing, cell execution, metrics CSV.

A cell is one (solver, mask, sigma_y, seed, budget) combination. The ground
truth draw and measurement depend only on (seed, mask, sigma_y), so every
solver sees the same problem instance. Per-cell RNGs are derived from the
cell coordinates, which makes results independent of worker scheduling.

Wall times go to a separate timings.csv so that metrics.csv is byte-stable
across reruns.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datasets import load_dataset
from .errors import ConfigError, DataError
from .imageio import write_float_image, write_png
from .operators import MASK_KINDS, make_mask, simulate_measurement
from .oracles import gaussian_posterior_logpdf, gaussian_posterior_map
from .pfode import OdeConfig
from .priors import GaussianMixture, fit_empirical_gaussian
from .schedule import edm_time_grid
from .solvers import (
    SolverConfig,
    default_solver_config,
    map_ga,
    map_ga_pgdm,
    naive_map_x0,
    pgdm_baseline,
)

SOLVER_NAMES = (
    "map-ga",
    "map-ga-np",
    "map-ga-d",
    "map-ga-d-np",
    "map-ga-pgdm",
    "map-ga-pgdm-d",
    "pgdm",
    "naive-map",
)

METRICS_COLUMNS = (
    "solver",
    "mask",
    "sigma_y",
    "seed",
    "n_time_steps",
    "num_iter",
    "mse",
    "psnr",
    "residual",
    "log_posterior",
)

SOLVER_PARAM_DEFAULTS = {
    "n_time_steps": 20,
    "num_iter": 50,
    "ode_steps": 40,
    "scheme": "rk4",
    "rho": 7.0,
    "epsilon": 0.002,
    "sigma_max": 80.0,
    "lr": None,
    "pgdm_steps": 500,
    "pgdm_hybrid_steps": 20,
    "naive_iters": 1000,
    "naive_lr": None,
    "warm_start_t": None,
}


@dataclass
class ExperimentConfig:
    prior: GaussianMixture
    width: int
    height: int
    channels: int
    masks: list
    sigma_y: list
    solvers: list
    seeds: list
    solver_params: dict = field(default_factory=dict)
    ablation: list | None = None
    save_images: bool = False
    peak: float = 1.0
    out_dir: str = "out"

    def params(self) -> dict:
        merged = dict(SOLVER_PARAM_DEFAULTS)
        merged.update(self.solver_params)
        return merged


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise ConfigError(f"{path}.{key}: missing required field")
    return doc[key]


def _load_prior(doc, path: str, dim: int) -> GaussianMixture:
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: must be an object")
    if "dataset" in doc:
        data = load_dataset(doc["dataset"])
        prior = fit_empirical_gaussian(data)
    else:
        try:
            prior = GaussianMixture(
                _require(doc, "weights", path),
                _require(doc, "means", path),
                _require(doc, "cov_diag", path),
            )
        except DataError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if prior.dim != dim:
        raise ConfigError(f"{path}: prior dimension {prior.dim} does not match image shape ({dim})")
    return prior


def config_from_dict(doc: dict) -> ExperimentConfig:
    shape = _require(doc, "shape", "$")
    width = _require(shape, "width", "$.shape")
    height = _require(shape, "height", "$.shape")
    channels = shape.get("channels", 1)
    dim = width * height * channels

    masks = _require(doc, "masks", "$")
    for i, kind in enumerate(masks):
        if kind not in MASK_KINDS:
            raise ConfigError(f"$.masks[{i}]: unknown mask kind {kind!r}")
    sigma_y = [float(s) for s in _require(doc, "sigma_y", "$")]
    for i, s in enumerate(sigma_y):
        if s < 0:
            raise ConfigError(f"$.sigma_y[{i}]: must be nonnegative")
    solvers = _require(doc, "solvers", "$")
    for i, name in enumerate(solvers):
        if name not in SOLVER_NAMES:
            raise ConfigError(f"$.solvers[{i}]: unknown solver {name!r}")
        if name in ("map-ga-pgdm", "map-ga-pgdm-d", "naive-map") and 0.0 in sigma_y:
            raise ConfigError(f"$.solvers[{i}]: {name!r} requires sigma_y > 0 in every grid cell")
    seeds = [int(s) for s in _require(doc, "seeds", "$")]

    params = doc.get("solver", {})
    unknown = set(params) - set(SOLVER_PARAM_DEFAULTS)
    if unknown:
        raise ConfigError(f"$.solver: unknown keys {sorted(unknown)}")

    ablation = doc.get("ablation")
    if ablation is not None:
        ablation = [(int(a), int(b)) for a, b in ablation]

    prior = _load_prior(_require(doc, "prior", "$"), "$.prior", dim)
    return ExperimentConfig(
        prior=prior,
        width=width,
        height=height,
        channels=channels,
        masks=list(masks),
        sigma_y=sigma_y,
        solvers=list(solvers),
        seeds=seeds,
        solver_params=dict(params),
        ablation=ablation,
        save_images=bool(doc.get("save_images", False)),
        peak=float(doc.get("peak", 1.0)),
        out_dir=doc.get("out_dir", "out"),
    )


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(doc)


# -- solver dispatch ----------------------------------------------------------


def _ga_config(name: str, params: dict, budget: tuple, sigma_y: float, t_max=None) -> SolverConfig:
    n_steps, num_iter = budget
    backend = "denoiser" if name in ("map-ga-d", "map-ga-d-np", "map-ga-pgdm-d") else "consistency"
    use_prior = not name.endswith("-np") and not name.startswith("map-ga-pgdm")
    return default_solver_config(
        n_time_steps=n_steps,
        num_iter=num_iter,
        epsilon=params["epsilon"],
        sigma_max=params["sigma_max"],
        rho=params["rho"],
        t_max=t_max,
        lr=params["lr"],
        use_prior=use_prior,
        backend=backend,
        ode=OdeConfig(steps=params["ode_steps"], scheme=params["scheme"], rho=params["rho"]),
    )


def run_solver(name: str, meas, prior, params: dict, budget: tuple, rng, x0=None):
    """Dispatch one named solver on one measurement; returns a SolveResult."""
    n_steps, num_iter = budget
    if name == "pgdm":
        return pgdm_baseline(
            meas,
            prior,
            n_steps=params["pgdm_steps"] if budget == (params["n_time_steps"], params["num_iter"]) else n_steps * num_iter,
            rng=rng,
            epsilon=params["epsilon"],
            sigma_max=params["sigma_max"],
            rho=params["rho"],
        )
    if name == "naive-map":
        iters = params["naive_iters"] if budget == (params["n_time_steps"], params["num_iter"]) else n_steps * num_iter
        return naive_map_x0(meas, prior, n_iters=iters, lr=params["naive_lr"], rng=rng)
    if name in ("map-ga-pgdm", "map-ga-pgdm-d"):
        cfg = _ga_config(name, params, budget, meas.sigma_y)
        cfg.time_grid = edm_time_grid(n_steps + 1, meas.sigma_y, params["sigma_max"], params["rho"])
        return map_ga_pgdm(meas, prior, cfg, {"n_steps": params["pgdm_hybrid_steps"]}, rng)

    warm_t = params["warm_start_t"]
    if warm_t is not None:
        if x0 is None:
            raise ConfigError("$.solver.warm_start_t requires a ground-truth draw")
        cfg = _ga_config(name, params, budget, meas.sigma_y, t_max=float(warm_t))
        z0 = x0 + float(warm_t) * rng.standard_normal(np.shape(x0))
        return map_ga(meas, prior, cfg, rng, z_init=z0)
    cfg = _ga_config(name, params, budget, meas.sigma_y)
    return map_ga(meas, prior, cfg, rng)


# -- cells ---------------------------------------------------------------------


def _cells(cfg: ExperimentConfig):
    params = cfg.params()
    budgets = cfg.ablation or [(params["n_time_steps"], params["num_iter"])]
    for si, solver in enumerate(cfg.solvers):
        for mi, mask in enumerate(cfg.masks):
            for yi, sy in enumerate(cfg.sigma_y):
                for seed in cfg.seeds:
                    for bi, budget in enumerate(budgets):
                        yield {
                            "solver": solver,
                            "solver_idx": si,
                            "mask": mask,
                            "mask_idx": mi,
                            "sigma_y": sy,
                            "sigma_idx": yi,
                            "seed": seed,
                            "budget": budget,
                            "budget_idx": bi,
                        }


def run_cell(cfg: ExperimentConfig, cell: dict) -> dict:
    params = cfg.params()
    mask = make_mask(cell["mask"], cfg.width, cfg.height, cfg.channels)

    problem_rng = np.random.default_rng(
        np.random.SeedSequence([cell["seed"], cell["mask_idx"], cell["sigma_idx"]])
    )
    solver_rng = np.random.default_rng(
        np.random.SeedSequence(
            [cell["seed"], cell["mask_idx"], cell["sigma_idx"], cell["solver_idx"] + 1, cell["budget_idx"]]
        )
    )
    x0 = cfg.prior.sample(problem_rng, 1)[0]
    meas = simulate_measurement(x0, mask, cell["sigma_y"], problem_rng)

    t0 = time.perf_counter()
    result = run_solver(cell["solver"], meas, cfg.prior, params, cell["budget"], solver_rng, x0=x0)
    wall = time.perf_counter() - t0
    x_hat = result.x_hat

    mse = float(np.mean((x_hat - x0) ** 2))
    psnr = float(10.0 * np.log10(cfg.peak**2 / mse)) if mse > 0 else float("inf")
    residual = float(np.linalg.norm(meas.residual(x_hat)))
    log_post = ""
    if cfg.prior.n_components == 1 and cell["sigma_y"] > 0:
        post = gaussian_posterior_map(
            cfg.prior.means[0], cfg.prior.covariances[0], mask, meas.y, cell["sigma_y"]
        )
        log_post = "%.17g" % gaussian_posterior_logpdf(post, x_hat)

    return {
        "solver": cell["solver"],
        "mask": cell["mask"],
        "sigma_y": "%.17g" % cell["sigma_y"],
        "seed": str(cell["seed"]),
        "n_time_steps": str(cell["budget"][0]),
        "num_iter": str(cell["budget"][1]),
        "mse": "%.17g" % mse,
        "psnr": "%.17g" % psnr,
        "residual": "%.17g" % residual,
        "log_posterior": log_post,
        "_wall_time": wall,
        "_x0": x0,
        "_x_hat": x_hat,
        "_y": meas.y,
    }


def _save_images(cfg: ExperimentConfig, cell: dict, row: dict, img_dir: Path) -> None:
    tag = "{solver}_{mask}_sy{sigma_y}_seed{seed}".format(**cell)
    shape = (cfg.channels, cfg.height, cfg.width)
    masked = make_mask(cell["mask"], cfg.width, cfg.height, cfg.channels).adjoint(row["_y"])
    for label, vec in (("orig", row["_x0"]), ("masked", masked), ("recon", row["_x_hat"])):
        arr = np.asarray(vec, dtype=np.float32).reshape(shape)
        write_float_image(img_dir / f"{tag}_{label}.f32", arr)
        if cfg.channels == 1:
            write_png(img_dir / f"{tag}_{label}.png", arr)


def _cell_worker(args):
    cfg, cell = args
    return cell, run_cell(cfg, cell)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1):
    """Run the full grid, write metrics.csv / timings.csv (and images), and
    return the metric rows in deterministic cell order."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = list(_cells(cfg))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell_worker, [(cfg, c) for c in cells]))
        results = [row for _, row in results]
    else:
        results = [run_cell(cfg, c) for c in cells]

    if cfg.save_images:
        img_dir = out / "images"
        img_dir.mkdir(exist_ok=True)
        for cell, row in zip(cells, results):
            _save_images(cfg, cell, row, img_dir)

    rows = [{k: row[k] for k in METRICS_COLUMNS} for row in results]
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(METRICS_COLUMNS))
        writer.writeheader()
        writer.writerows(rows)
    with open(out / "timings.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["solver", "mask", "sigma_y", "seed", "n_time_steps", "num_iter", "wall_time"])
        for row in results:
            writer.writerow(
                [row["solver"], row["mask"], row["sigma_y"], row["seed"], row["n_time_steps"], row["num_iter"], "%.6f" % row["_wall_time"]]
            )
    return rows


def summarize(rows: list) -> list:
    """Aggregate metric rows to per-(solver, mask, sigma_y) means."""
    groups: dict = {}
    for row in rows:
        key = (row["solver"], row["mask"], row["sigma_y"])
        groups.setdefault(key, []).append(row)
    summary = []
    for (solver, mask, sy), members in sorted(groups.items()):
        summary.append(
            {
                "solver": solver,
                "mask": mask,
                "sigma_y": sy,
                "count": str(len(members)),
                "mean_mse": "%.17g" % np.mean([float(r["mse"]) for r in members]),
                "mean_psnr": "%.17g" % np.mean([float(r["psnr"]) for r in members]),
                "mean_residual": "%.17g" % np.mean([float(r["residual"]) for r in members]),
            }
        )
    return summary
