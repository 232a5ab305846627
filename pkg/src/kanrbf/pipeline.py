"""Whole-cloud estimation, experiment drivers and CSV reports."""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .differential import FittedImplicit, SurfaceFrame, max_error, normal_error, rms_error, surface_frame
from .errors import DataError, DomainError, KanRBFError
from .kernel import MaternKernel
from .solver import FEASIBILITY_TOL, MinNormProblem, solve, solve_tikhonov
from .stencil import NeighborIndex, Stencil, attach_ghosts, ghost_offset, orient_normal, pca_normal
from .surfaces import ImplicitSurface, PointCloud, fill_distance, halton_sample, read_xyz, sphube
from .trialspace import CONFIGS, CenterConfig, assemble

METHODS = ("pca", "rbf", "hrbf", "krbf")
NORMS = ("native", "l2")
STENCIL_RANGE = (40, 50, 60, 70, 80)
SCHEMA_VERSION = "1"
SUMMARY_COLUMNS = ("shape", "N", "fill", "tau", "Ns", "method", "norm", "config",
                   "max_err", "rms_err", "runtime_ms")
POINT_COLUMNS = ("index", "x", "y", "z", "nx", "ny", "nz", "kappa1", "kappa2",
                 "gaussian", "mean", "error", "flag")
PROBE_MIN = 20000


@dataclass(frozen=True)
class EstimatorSpec:
    method: str = "krbf"
    tau: int = 5
    stencil_size: int = 40
    norm: str = "native"
    center_config: CenterConfig = field(default_factory=CenterConfig)
    tikhonov_mu: float | None = None
    curvature: bool | None = None  # None: whenever the kernel is smooth enough

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")
        if self.norm not in NORMS:
            raise DomainError(f"unknown norm {self.norm!r}")
        if self.stencil_size < 3:
            raise DomainError("stencil size must be at least 3")
        if self.tikhonov_mu is not None and not self.tikhonov_mu > 0:
            raise DomainError("Tikhonov weight must be positive")
        if isinstance(self.center_config, (str, int)):
            object.__setattr__(self, "center_config", CenterConfig(str(self.center_config)))
        if self.method != "pca":
            MaternKernel(self.tau, 3)

    def wants_curvature(self) -> bool:
        if self.method == "pca":
            return False
        k3 = MaternKernel(self.tau, 3)
        need = 3 if self.method == "hrbf" else 2
        capable = k3.order >= {2: 1, 3: 2}[need]
        if self.curvature is None:
            return capable
        if self.curvature and not capable:
            k3.require_order(need)
        return self.curvature


@dataclass
class ExperimentReport:
    rows: list[dict] = field(default_factory=list)
    schema_version: str = SCHEMA_VERSION
    fits: list[dict] = field(default_factory=list)
    fields: dict = field(default_factory=dict)


def _failed(flag: str) -> SurfaceFrame:
    return SurfaceFrame(np.full(3, np.nan), flag=flag)


def _orientation_refs(cloud: PointCloud) -> np.ndarray:
    if cloud.normals is not None:
        return np.asarray(cloud.normals, float)
    # without normals, orient away from the centroid
    return cloud.points - cloud.points.mean(axis=0)


def estimate_point(cloud: PointCloud, i: int, spec: EstimatorSpec, index: NeighborIndex,
                   neighbors: np.ndarray | None = None, ref: np.ndarray | None = None,
                   curvature: bool | None = None) -> tuple[SurfaceFrame, Stencil | None]:
    """One stencil pipeline.  Raises on failure; callers isolate errors."""
    if neighbors is None:
        neighbors = index.knn([i], spec.stencil_size)[0]
    if neighbors[0] != i:
        raise DomainError("duplicate point in cloud")
    st = Stencil(int(i), neighbors, index.points[neighbors])
    if ref is None:
        ref = _orientation_refs(cloud)[i]
    n0 = orient_normal(pca_normal(st), ref)
    st = replace(st, pca_normal=n0)
    if spec.method == "pca":
        return SurfaceFrame(n0), st
    st = attach_ghosts(st, n0, ghost_offset(st))
    asm = assemble(spec.method, st, spec.tau, spec.center_config)
    # the residual is checked here so an over-tolerance point keeps its estimate and is flagged
    problem = MinNormProblem.from_assembly(asm, st.rhs, spec.norm, check_feasibility=False)
    sol = solve(problem) if spec.tikhonov_mu is None else solve_tikhonov(problem, spec.tikhonov_mu)
    curv = spec.wants_curvature() if curvature is None else curvature
    frame = surface_frame(FittedImplicit(asm, sol.lam), st.center, n0, curvature=curv)
    if spec.tikhonov_mu is None and sol.residual > FEASIBILITY_TOL * (1 + np.linalg.norm(st.rhs)):
        frame.flag = ";".join(f for f in (frame.flag, "infeasible") if f)
    return frame, st


def estimate_cloud(cloud: PointCloud, spec: EstimatorSpec, *, indices=None,
                   index: NeighborIndex | None = None, workers: int = 1,
                   curvature: bool | None = None) -> list[SurfaceFrame]:
    """Frames for every point (or for ``indices``), in point order.

    A point whose pipeline fails gets a NaN normal and a flag naming the
    error; the other points are unaffected.
    """
    n = len(cloud.points)
    if n < spec.stencil_size:
        raise DataError(f"cloud has {n} points, fewer than the stencil size {spec.stencil_size}")
    index = index or NeighborIndex(cloud.points)
    idx = np.arange(n) if indices is None else np.asarray(indices, dtype=int)
    refs = _orientation_refs(cloud)
    nbrs = index.knn(idx, spec.stencil_size) if len(idx) else np.zeros((0, spec.stencil_size), int)

    def one(j):
        i = int(idx[j])
        try:
            return estimate_point(cloud, i, spec, index, nbrs[j], refs[i], curvature)[0]
        except (KanRBFError, np.linalg.LinAlgError, ValueError) as exc:
            return _failed(f"error:{type(exc).__name__}")

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, range(len(idx))))
    return [one(j) for j in range(len(idx))]


def frame_errors(frames, exact_normals) -> np.ndarray:
    est = np.array([f.normal for f in frames], dtype=float).reshape(-1, 3)
    return normal_error(est, np.asarray(exact_normals, float).reshape(-1, 3))


def probe_cloud(surface: ImplicitSurface, n: int) -> PointCloud:
    return halton_sample(surface, max(PROBE_MIN, 8 * n))


def _eval_indices(n: int, eval_count: int | None) -> np.ndarray:
    if eval_count is None or eval_count >= n:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, eval_count).round().astype(int))


def _sweep(cloud, spec, stencil_range, indices, index):
    """Worst max and rms normal error over the stencil sizes, the per-point errors
    of the worst size, and failure/infeasibility counts summed over all sizes."""
    worst_max, worst_rms, worst_pts = -math.inf, -math.inf, None
    counts = {"failed": 0, "infeasible": 0}
    for ns in stencil_range:
        s = replace(spec, stencil_size=int(ns))
        frames = estimate_cloud(cloud, s, indices=indices, index=index, curvature=False)
        err = frame_errors(frames, cloud.normals[indices])
        counts["failed"] += int(np.isnan(err).sum())
        counts["infeasible"] += sum("infeasible" in f.flag for f in frames)
        if np.all(np.isnan(err)):
            continue
        mx, rm = max_error(err), rms_error(err)
        if mx > worst_max:
            worst_max, worst_pts = mx, err
        worst_rms = max(worst_rms, rm)
    if worst_pts is None:
        return math.nan, math.nan, None, counts
    return worst_max, worst_rms, worst_pts, counts


def _row(shape, N, fill, tau, ns, method, norm, config, mx, rm, t0, counts=None):
    # failed/infeasible counts ride along in memory; the CSV keeps the fixed schema
    return {"shape": shape, "N": N, "fill": fill, "tau": tau, "Ns": ns, "method": method,
            "norm": norm, "config": config, "max_err": mx, "rms_err": rm,
            "runtime_ms": (time.perf_counter() - t0) * 1e3, **(counts or {})}


def _ns_label(stencil_range) -> str:
    r = list(stencil_range)
    return str(r[0]) if len(r) == 1 else f"{min(r)}-{max(r)}"


def run_config_study(shape: ImplicitSurface, n_list, tau_list, stencil_range=STENCIL_RANGE,
                     configs=CONFIGS, norm: str = "native",
                     eval_count: int | None = None) -> ExperimentReport:
    if not n_list or not tau_list or not stencil_range or not configs:
        raise DomainError("study lists must be nonempty")
    report = ExperimentReport()
    for N in n_list:
        cloud = halton_sample(shape, int(N))
        fill = fill_distance(cloud, probe_cloud(shape, int(N)))
        index = NeighborIndex(cloud.points)
        ev = _eval_indices(int(N), eval_count)
        for tau in tau_list:
            for cfg in configs:
                cc = CenterConfig(str(cfg))
                t0 = time.perf_counter()
                spec = EstimatorSpec("krbf", int(tau), max(stencil_range), norm, cc)
                mx, rm, _, cnt = _sweep(cloud, spec, stencil_range, ev, index)
                report.rows.append(_row(shape.label, int(N), fill, int(tau), _ns_label(stencil_range),
                                        "krbf", norm, cc.number, mx, rm, t0, cnt))
    return report


def run_norm_study(shape: ImplicitSurface, n_list, tau_list, stencil_range=STENCIL_RANGE,
                   config="stretch_regrid", methods=("hrbf", "krbf"), norms=NORMS,
                   eval_count: int | None = None) -> ExperimentReport:
    if not n_list or not tau_list or not stencil_range:
        raise DomainError("study lists must be nonempty")
    cc = CenterConfig(str(config))
    report = ExperimentReport()
    for N in n_list:
        cloud = halton_sample(shape, int(N))
        fill = fill_distance(cloud, probe_cloud(shape, int(N)))
        index = NeighborIndex(cloud.points)
        ev = _eval_indices(int(N), eval_count)
        for tau in tau_list:
            for method in methods:
                for norm in norms:
                    t0 = time.perf_counter()
                    spec = EstimatorSpec(method, int(tau), max(stencil_range), norm, cc)
                    mx, rm, _, cnt = _sweep(cloud, spec, stencil_range, ev, index)
                    report.rows.append(_row(shape.label, int(N), fill, int(tau),
                                            _ns_label(stencil_range), method, norm,
                                            cc.number if method == "krbf" else "", mx, rm, t0, cnt))
    return report


def loglog_slope(h, err) -> float:
    """Least-squares slope of log(err) against log(h); NaN when undefined."""
    h, err = np.asarray(h, float), np.asarray(err, float)
    ok = np.isfinite(h) & np.isfinite(err) & (h > 0) & (err > 0)
    if ok.sum() < 2:
        return math.nan
    x, y = np.log(h[ok]), np.log(err[ok])
    if np.ptp(x) == 0:
        return math.nan
    return float(np.polyfit(x, y, 1)[0])


def run_convergence(shape: ImplicitSurface, tau_list, n_list, stencil_range=STENCIL_RANGE,
                    methods=("rbf", "hrbf", "krbf"), config="stretch_regrid",
                    eval_count: int | None = None) -> ExperimentReport:
    if len(set(int(n) for n in n_list)) < 3:
        raise DomainError("convergence study needs at least 3 distinct N")
    cc = CenterConfig(str(config))
    report = ExperimentReport()
    clouds = {}
    for N in sorted(set(int(n) for n in n_list)):
        cloud = halton_sample(shape, N)
        clouds[N] = (cloud, fill_distance(cloud, probe_cloud(shape, N)), NeighborIndex(cloud.points))
    for tau in tau_list:
        for method in methods:
            hs, es = [], []
            for N, (cloud, fill, index) in clouds.items():
                t0 = time.perf_counter()
                spec = EstimatorSpec(method, int(tau), max(stencil_range), "native", cc)
                mx, rm, _, cnt = _sweep(cloud, spec, stencil_range, _eval_indices(N, eval_count), index)
                report.rows.append(_row(shape.label, N, fill, int(tau), _ns_label(stencil_range),
                                        method, "native", cc.number if method == "krbf" else "",
                                        mx, rm, t0, cnt))
                hs.append(fill)
                es.append(mx)
            report.fits.append({"method": method, "tau": int(tau), "slope": loglog_slope(hs, es),
                                "reference": int(tau) - 1})
    return report


def run_flattening_sphube(s_list, n: int = 5000, tau: int = 5, stencil_size: int = 40,
                          radius: float = 1.0, config="stretch_regrid",
                          eval_count: int | None = None) -> ExperimentReport:
    """PCA, per-point best of RBF and HRBF, and KRBF on sphubes of growing flatness."""
    report = ExperimentReport()
    cc = CenterConfig(str(config))
    for s in s_list:
        if not 0 <= s < 1:
            raise DomainError("flatness must lie in [0, 1)")
        shape = sphube(float(s), radius)
        cloud = halton_sample(shape, int(n))
        fill = fill_distance(cloud, probe_cloud(shape, int(n)))
        index = NeighborIndex(cloud.points)
        ev = _eval_indices(int(n), eval_count)
        errs, times = {}, {}
        for method in ("pca", "rbf", "hrbf", "krbf"):
            t0 = time.perf_counter()
            frames = estimate_cloud(cloud, EstimatorSpec(method, tau, stencil_size, "native", cc),
                                    indices=ev, index=index, curvature=False)
            errs[method] = frame_errors(frames, cloud.normals[ev])
            times[method] = time.perf_counter() - t0
        best = np.fmin(errs["rbf"], errs["hrbf"])
        fieldset = {"points": cloud.points[ev], "pca": errs["pca"], "best_rbf_hrbf": best,
                    "krbf": errs["krbf"]}
        report.fields[float(s)] = fieldset
        for label, e, dt in (("pca", errs["pca"], times["pca"]),
                             ("best_rbf_hrbf", best, times["rbf"] + times["hrbf"]),
                             ("krbf", errs["krbf"], times["krbf"])):
            report.rows.append(_row(shape.label, int(n), fill, tau, str(stencil_size), label,
                                    "" if label == "pca" else "native",
                                    cc.number if label == "krbf" else "",
                                    max_error(e), rms_error(e), time.perf_counter() - dt,
                                    {"failed": int(np.isnan(e).sum())}))
    return report


def fair_cloud(cloud: PointCloud, iterations: int, spec: EstimatorSpec,
               sigma_kappa: float | None = None, workers: int = 1) -> PointCloud:
    """Curvature-weighted neighbour averaging, all points updated at once.

    Weights are ``exp(-|p_j - p_i|^2 / s^2) * exp(-k1(p_j)^2 / sk^2)`` over
    the stencil of ``p_i``, with ``s`` the ghost offset at ``p_i`` and ``sk``
    the median ``|k1|`` of the current cloud unless given.  Points whose
    estimate fails stay put and are listed in ``meta["flags"]``.
    """
    if iterations < 0:
        raise DomainError("iterations must be nonnegative")
    if spec.method == "pca":
        raise DomainError("fairing needs curvature; choose rbf, hrbf or krbf")
    pts = np.array(cloud.points, dtype=float)
    flags: dict[int, str] = {}
    for _ in range(iterations):
        cur = PointCloud(pts, None, source=cloud.source)
        index = NeighborIndex(pts)
        frames = estimate_cloud(cur, spec, index=index, workers=workers, curvature=True)
        k1 = np.array([f.kappa1 for f in frames], dtype=float)
        ok = np.isfinite(k1)
        sk = sigma_kappa
        if sk is None:
            sk = float(np.median(np.abs(k1[ok]))) if ok.any() else math.inf
        nbrs = index.knn(np.arange(len(pts)), spec.stencil_size)
        new = pts.copy()
        for i in range(len(pts)):
            if not ok[i]:
                flags[i] = frames[i].flag or "error"
                continue
            nb = nbrs[i]
            st = Stencil(i, nb, pts[nb])
            s2 = ghost_offset(st) ** 2
            d2 = ((pts[nb] - pts[i]) ** 2).sum(-1)
            w = np.exp(-d2 / s2)
            if math.isfinite(sk) and sk > 0:
                w = w * np.exp(-np.where(ok[nb], k1[nb], np.inf) ** 2 / sk**2)
            else:
                w = w * ok[nb]
            tot = w.sum()
            if tot > 0:
                new[i] = (w[:, None] * pts[nb]).sum(0) / tot
        pts = new
    return PointCloud(pts, None, source=f"{cloud.source}+fair({iterations})",
                      meta={**cloud.meta, "flags": flags})


# -- I/O --------------------------------------------------------------------

def ingest_xyz(path, require_normals: bool = False) -> PointCloud:
    cloud = read_xyz(path)
    if require_normals and cloud.normals is None:
        raise DataError(f"{path}: ground-truth normals required but the file has only positions")
    return cloud


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def emit_report(report: ExperimentReport, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in report.rows:
            w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
    return path


def emit_fits(report: ExperimentReport, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method", "tau", "slope", "reference"))
        for f in report.fits:
            w.writerow([_fmt(f[c]) for c in ("method", "tau", "slope", "reference")])
    return path


def point_rows(cloud: PointCloud, frames, errors=None, indices=None) -> list[list]:
    idx = np.arange(len(cloud.points)) if indices is None else np.asarray(indices, int)
    rows = []
    for j, (i, f) in enumerate(zip(idx, frames)):
        e = math.nan if errors is None else float(errors[j])
        rows.append([int(i), *cloud.points[i], *f.normal, f.kappa1, f.kappa2, f.gaussian,
                     f.mean, e, f.flag])
    return rows


def emit_points(cloud: PointCloud, frames, path, errors=None, indices=None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POINT_COLUMNS)
        for row in point_rows(cloud, frames, errors, indices):
            w.writerow([_fmt(v) for v in row])
    return path


def emit_field(report: ExperimentReport, path) -> Path:
    """Per-point error fields of a sphube sweep, one row per (s, point)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("s", "x", "y", "z", "pca", "best_rbf_hrbf", "krbf"))
        for s, fs in report.fields.items():
            for p, a, b, c in zip(fs["points"], fs["pca"], fs["best_rbf_hrbf"], fs["krbf"]):
                w.writerow([_fmt(v) for v in (s, *p, a, b, c)])
    return path


def read_report(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))

