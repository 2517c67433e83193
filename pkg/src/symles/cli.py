"""Command-line pipeline: dns, filter, train, evaluate, selftest, plot.

Exit codes: 0 on success, 2 when a simulation or training run went
non-finite (partial outputs are kept), 3 on configuration or input
validation errors.  One output directory holds one run: dns/ snapshots
and timeseries, pairs/ training data, models/ trained parameters and
loss histories, eval/ the CSV metric tables, figures/ rendered plots.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import closures, evaluate, filtering, octa, projection, sim, snapio, spectral
from .config import RunConfig, parse_config

EXIT_OK = 0
EXIT_INSTABILITY = 2
EXIT_VALIDATION = 3


class OutputLock:
    """Guards an output directory against concurrent writers."""

    def __init__(self, out_dir):
        self.path = Path(out_dir) / ".lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self.path.touch(exist_ok=False)
        except FileExistsError:
            raise RuntimeError(
                f"output directory is locked by another run ({self.path}); "
                "remove the lock file if that run is gone"
            ) from None
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value):
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return "NA"
    return f"{value:.12e}" if isinstance(value, float) else value


# ------------------------------------------------------------------ dns


def cmd_dns(config: RunConfig) -> int:
    out = Path(config.out_dir) / "dns"
    out.mkdir(parents=True, exist_ok=True)
    counter = {"idx": 0}

    def on_snapshot(t, u_hat):
        snapio.write_snapshot(out / f"sn_{counter['idx']:04d}.bin", t, u_hat)
        counter["idx"] += 1

    with OutputLock(config.out_dir):
        try:
            result = sim.run_dns(config.sim_config(), on_snapshot)
            timeseries = result.timeseries
            code = EXIT_OK
        except sim.SimulationDiverged as exc:
            print(f"DNS diverged: {exc}", file=sys.stderr)
            timeseries = getattr(exc, "timeseries", np.empty((0, 3)))
            code = EXIT_INSTABILITY
        _write_csv(
            out / "timeseries.csv",
            ["t", "E", "eps"],
            [(f"{t:.12e}", f"{e:.12e}", f"{d:.12e}") for t, e, d in timeseries],
        )
    print(f"wrote {counter['idx']} snapshots to {out}")
    return code


# ---------------------------------------------------------------- filter


def cmd_filter(config: RunConfig) -> int:
    dns_dir = Path(config.out_dir) / "dns"
    files = snapio.sorted_files(dns_dir, "sn_*.bin")
    if not files:
        raise FileNotFoundError(f"no DNS snapshots found in {dns_dir}")
    out = Path(config.out_dir) / "pairs"
    out.mkdir(parents=True, exist_ok=True)
    fine = config.dns_grid()
    coarse = config.les_grid()
    spec = filtering.FilterSpec(delta=config.delta)
    for idx, path in enumerate(files):
        t, u_hat = snapio.read_snapshot(path)
        pair = filtering.make_pair(t, u_hat, fine, coarse, spec)
        pair.validate(coarse)
        snapio.write_pair(out / f"pair_{idx:04d}.bin", pair)
    print(f"wrote {len(files)} pair files to {out}")
    return EXIT_OK


def _load_pairs(config: RunConfig):
    pair_dir = Path(config.out_dir) / "pairs"
    files = snapio.sorted_files(pair_dir, "pair_*.bin")
    if not files:
        raise FileNotFoundError(f"no pair files found in {pair_dir}")
    return [snapio.read_pair(path) for path in files]


# ----------------------------------------------------------------- train


def cmd_train(config: RunConfig) -> int:
    pairs = _load_pairs(config)
    train_pairs, _ = filtering.build_dataset(pairs, config.split_fraction)
    if len(train_pairs) < config.batch_size:
        raise ValueError(
            f"{len(train_pairs)} training pairs < batch size {config.batch_size}"
        )
    closure = closures.make_closure(config.model, seed=config.seed)
    if not closure.trainable:
        raise ValueError(f"model '{config.model}' has no trainable parameters")
    grid = config.les_grid()
    try:
        history = closures.train(
            closure, train_pairs, grid, config.delta, config.train_config()
        )
    except RuntimeError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    models_dir = Path(config.out_dir) / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    closures.save_model(models_dir / f"{config.model}.bin", closure)
    _write_csv(
        models_dir / f"loss_{config.model}.csv",
        ["batch", "epoch", "loss"],
        [(b, e, f"{v:.12e}") for e, b, v in history],
    )
    print(
        f"trained {config.model}: first batch loss {history[0][2]:.4f}, "
        f"last {history[-1][2]:.4f}"
    )
    return EXIT_OK


# -------------------------------------------------------------- evaluate


def _mean_production_dissipation(config: RunConfig):
    """Time-averaged dissipation from the DNS production timeseries."""
    path = Path(config.out_dir) / "dns" / "timeseries.csv"
    if not path.exists():
        return None
    rows = np.genfromtxt(path, delimiter=",", names=True)
    production = rows["eps"][rows["t"] >= 0.0]
    return float(production.mean()) if production.size else None


def _evaluation_models(config: RunConfig, only: str | None):
    models = [closures.make_closure(name) for name in ("nomodel", "smag", "clark")]
    models_dir = Path(config.out_dir) / "models"
    for name in ("tbnn", "gconv", "conv"):
        if only is not None and name != only:
            continue
        path = models_dir / f"{name}.bin"
        if path.exists():
            models.append(closures.load_model(path))
    if only is not None and only not in [m.name for m in models]:
        raise FileNotFoundError(f"no trained model file for '{only}'")
    return models


def cmd_evaluate(config: RunConfig, only_model: str | None = None) -> int:
    grid = config.les_grid()
    delta = config.delta
    pairs = _load_pairs(config)
    _, test_pairs = filtering.build_dataset(pairs, config.split_fraction)
    if not test_pairs:
        raise ValueError("empty test split")
    models = _evaluation_models(config, only_model)
    eval_dir = Path(config.out_dir) / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)

    times = [p.t for p in test_pairs]
    u0 = test_pairs[0].u_bar
    errors_rows = []
    time_rows = []
    equi = {}
    trajectories = {}

    for model in models:
        tensor_prior = evaluate.apriori_tensor_error(model, test_pairs, grid, delta)
        term = closures.les_closure_term(model, grid, delta, config.dealias_closure)
        result = sim.run_les(
            u0, times, grid, config.viscosity, cfl=config.cfl,
            forced_shell_max=config.forced_shell_max, closure_stress=term,
        )
        trajectories[model.name] = result
        post_mean, series = evaluate.aposteriori_solution_error(
            result.states, times, test_pairs, grid
        )
        time_rows += [(model.name, f"{t:.12e}", f"{e:.12e}") for t, e in series]

        prior_vec, prior_mean = evaluate.equivariance_error_prior(
            model, test_pairs[0].u_bar, grid, delta
        )
        post_vec, equi_post_mean = evaluate.equivariance_error_post(
            model, u0, grid, config.viscosity, delta,
            t_eval=config.equi_time, cfl=config.cfl,
            forced_shell_max=config.forced_shell_max,
            dealias_closure=config.dealias_closure,
        )
        equi[model.name] = (prior_vec, post_vec)
        errors_rows += [
            (model.name, "tensor_prior", _fmt(tensor_prior)),
            (model.name, "solution_post", _fmt(post_mean)),
            (model.name, "equi_tensor_prior", _fmt(prior_mean)),
            (model.name, "equi_solution_post", _fmt(equi_post_mean)),
        ]
        print(
            f"{model.name}: tensor_prior={tensor_prior:.4f} "
            f"solution_post={_fmt(post_mean)}",
            file=sys.stderr,
        )

    _write_csv(eval_dir / "errors.csv", ["model", "metric", "value"], errors_rows)
    _write_csv(eval_dir / "errors_vs_time.csv", ["model", "t", "error"], time_rows)
    _write_csv(
        eval_dir / "equi.csv",
        ["model", "element", "prior", "post"],
        [
            (name, element + 1, _fmt(float(vec[element])), _fmt(float(post[element])))
            for name, (vec, post) in equi.items()
            for element in range(48)
        ],
    )

    _emit_spectra(config, grid, test_pairs, trajectories, eval_dir)
    _emit_distributions(config, grid, delta, test_pairs, models, eval_dir)
    _emit_qr(config, grid, test_pairs, trajectories, eval_dir)
    print(f"wrote evaluation tables to {eval_dir}")
    return EXIT_OK


def _emit_spectra(config, grid, test_pairs, trajectories, eval_dir):
    eps = _mean_production_dissipation(config)
    rows = []

    def add(name, spectrum):
        if eps is not None:
            ktil, etil = spectrum.normalized(eps, config.viscosity)
        else:
            ktil = etil = np.full(spectrum.kappa.size, np.nan)
        for i in range(spectrum.kappa.size):
            rows.append(
                (
                    name,
                    int(spectrum.kappa[i]),
                    f"{spectrum.energy[i]:.12e}",
                    _fmt(float(ktil[i])),
                    _fmt(float(etil[i])),
                )
            )

    add("reference", evaluate.mean_spectrum([p.u_bar for p in test_pairs], grid))
    dns_dir = Path(config.out_dir) / "dns"
    dns_files = snapio.sorted_files(dns_dir, "sn_*.bin")
    if dns_files:
        dns_grid = config.dns_grid()
        tail = dns_files[-len(test_pairs):]
        acc = None
        for path in tail:
            _, u_hat = snapio.read_snapshot(path)
            shells = spectral.shell_energies(u_hat, dns_grid)
            acc = shells if acc is None else acc + shells
        add(
            "dns",
            evaluate.SpectrumResult(
                kappa=np.arange(acc.size), energy=acc / len(tail)
            ),
        )
    for name, result in trajectories.items():
        states = [s for s in result.states if s is not None]
        if states:
            add(name, evaluate.mean_spectrum(states, grid))
    _write_csv(
        eval_dir / "spectrum.csv",
        ["model", "kappa", "E", "kappa_tilde", "E_tilde"],
        rows,
    )


def _emit_distributions(config, grid, delta, test_pairs, models, eval_dir):
    """A-priori distributions of tau_11, tau_12, and the dissipation
    coefficient, all evaluated on the reference's sample window."""
    strain = [spectral.strain_field(p.u_bar, grid) for p in test_pairs]
    reference = {"tau11": [], "tau12": [], "dissipation": []}
    for pair, s in zip(test_pairs, strain):
        tau = spectral.sym6_to_full(pair.tau_dev)
        reference["tau11"].append(tau[..., 0, 0].ravel())
        reference["tau12"].append(tau[..., 0, 1].ravel())
        reference["dissipation"].append(
            evaluate.dissipation_coefficient(tau, s).ravel()
        )
    columns = {key: {} for key in reference}
    windows = {}
    grids = {}
    for key in reference:
        samples = evaluate.subsample(np.concatenate(reference[key]))
        mu, sigma = float(samples.mean()), float(samples.std())
        windows[key] = (mu - 5 * sigma, mu + 5 * sigma)
        x, density = evaluate.kde_1d(samples, window=windows[key])
        grids[key] = x
        columns[key]["reference"] = density
    for model in models:
        if isinstance(model, closures.NoModel):
            continue  # a Dirac spike at zero; omitted like in the reference tables
        samples = {"tau11": [], "tau12": [], "dissipation": []}
        for pair, s in zip(test_pairs, strain):
            m = closures.stress_field(model, pair.u_bar, grid, delta)
            samples["tau11"].append(m[..., 0, 0].ravel())
            samples["tau12"].append(m[..., 0, 1].ravel())
            samples["dissipation"].append(
                evaluate.dissipation_coefficient(m, s).ravel()
            )
        for key in samples:
            pooled = evaluate.subsample(np.concatenate(samples[key]))
            _, density = evaluate.kde_1d(pooled, window=windows[key])
            columns[key][model.name] = density
    for key in reference:
        names = list(columns[key])
        rows = [
            [f"{grids[key][i]:.12e}"] + [f"{columns[key][n][i]:.12e}" for n in names]
            for i in range(grids[key].size)
        ]
        _write_csv(eval_dir / f"dist_{key}.csv", ["x"] + names, rows)


def _emit_qr(config, grid, test_pairs, trajectories, eval_dir):
    t_scale = evaluate.gradient_time_scale(test_pairs, grid)

    def qr_samples(states):
        qs, rs = [], []
        for state in states:
            a = spectral.vgt_field(state, grid)
            q, r = evaluate.qr_invariants(a)
            qs.append(q.ravel())
            rs.append(r.ravel())
        q = evaluate.subsample(np.concatenate(qs)) * t_scale**2
        r = evaluate.subsample(np.concatenate(rs)) * t_scale**3
        return q, r

    def emit(name, states):
        q, r = qr_samples(states)
        xc, yc, density = evaluate.kde_2d(q, r)
        rows = []
        for i in range(xc.size):
            for j in range(yc.size):
                if density[i, j] > 0:
                    rows.append(
                        (f"{xc[i]:.8e}", f"{yc[j]:.8e}", f"{density[i, j]:.8e}")
                    )
        _write_csv(eval_dir / f"qr_density_{name}.csv", ["q_tilde", "r_tilde", "density"], rows)

    emit("reference", [p.u_bar for p in test_pairs])
    for name, result in trajectories.items():
        states = [s for s in result.states if s is not None]
        if states:
            emit(name, states)
    r_line = np.linspace(-8.0, 8.0, 401)
    q_line = evaluate.vieillefosse_curve(r_line)
    _write_csv(
        eval_dir / "qr_vieillefosse.csv",
        ["r_tilde", "q_tilde"],
        [(f"{r:.12e}", f"{q:.12e}") for r, q in zip(r_line, q_line)],
    )


# -------------------------------------------------------------- selftest


def cmd_selftest(out_dir: str | None = None) -> int:
    """Fast invariant suite: group axioms, projector ranks, spectral identities."""
    failures = []

    def check(name, ok, detail=""):
        status = "ok" if ok else "FAIL"
        print(f"{name:<44s} {status} {detail}")
        if not ok:
            failures.append(name)

    group = octa.enumerate_group()
    mats = [octa.rotation_matrix(g) for g in group]
    dets = [int(round(np.linalg.det(m))) for m in mats]
    check(
        "group census (48 elements, 24 + 24)",
        len({m.tobytes() for m in mats}) == 48
        and dets.count(1) == 24
        and dets.count(-1) == 24,
        f"|G|={len(mats)}, det +1: {dets.count(1)}, det -1: {dets.count(-1)}",
    )
    table = octa.cayley_table()
    latin = all(
        set(table[i]) == set(range(48)) and set(table[:, i]) == set(range(48))
        for i in range(48)
    )
    check("cayley table closed, latin square", latin)
    rng = np.random.default_rng(0)
    hom_ok = all(
        np.array_equal(
            octa.regular_rep(g)[octa.regular_rep(h)],
            octa.regular_rep(octa.compose(g, h)),
        )
        for g, h in (
            (group[i], group[j]) for i, j in rng.integers(0, 48, size=(100, 2))
        )
    )
    check("regular representation homomorphism", hom_ok)

    for kind in projection.LayerKind:
        mat = projection.projector_matrix(kind)
        eigvals = np.linalg.eigvalsh(mat)
        near_one = eigvals > 0.5
        bimodal = bool(
            np.all(np.abs(eigvals[near_one] - 1.0) <= 1e-8)
            and np.all(np.abs(eigvals[~near_one]) <= 1e-8)
        )
        rank = int(near_one.sum())
        check(
            f"projector rank {kind.name.lower()}",
            bimodal and rank == kind.rank,
            f"rank={rank} (expected {kind.rank})",
        )
        basis = projection.shared_basis(kind)
        try:
            projection.validate_basis(basis)
            check(f"shared basis {kind.name.lower()} equivariant", True)
        except ValueError as exc:
            check(f"shared basis {kind.name.lower()} equivariant", False, str(exc))

    if out_dir is not None:
        cache = Path(out_dir) / "eqbasis.bin"
        if cache.exists():
            try:
                loaded = projection.load_bases(cache)
                for kind, basis in loaded.items():
                    projection.validate_basis(basis)
                check("shared-basis cache valid", len(loaded) == 3)
            except ValueError as exc:
                check("shared-basis cache valid", False, str(exc))

    grid = spectral.Grid(16)
    u_hat = sim.init_velocity(grid, seed=1, e0=0.2)
    rt = grid.inverse(grid.forward(grid.inverse(u_hat).real)).real
    check(
        "transform round-trip",
        np.abs(rt - grid.inverse(u_hat).real).max()
        <= 1e-13 * np.abs(grid.inverse(u_hat).real).max(),
    )
    check("leray projection divergence", spectral.max_divergence(u_hat, grid) <= 1e-12)
    tend = spectral.rhs(u_hat, grid, 0.0)
    inner = abs(float(np.sum((np.conj(u_hat * grid.dealias_mask) * tend).real)))
    check(
        "dealiased energy conservation",
        inner <= 1e-11 * np.sum(np.abs(u_hat) ** 2),
        f"<u, rhs> = {inner:.2e}",
    )
    mode = np.zeros((3, 16, 16, 16), complex)
    mode[1, 2, 0, 0] = 1.0
    mode[1, -2, 0, 0] = 1.0
    nu = 0.05
    t, dt = 0.0, 2e-3
    state = mode
    while t < 0.05 - 1e-12:
        state = sim.rk3_step(state, dt, lambda v: spectral.rhs(v, grid, nu))
        t += dt
    decay = abs(state[1, 2, 0, 0]) / np.exp(-nu * 4.0 * t)
    check("single-mode viscous decay", abs(decay - 1.0) <= 1e-6, f"ratio={decay:.9f}")

    print(f"{len(failures)} failures" if failures else "all selftest checks passed")
    return EXIT_VALIDATION if failures else EXIT_OK


# ------------------------------------------------------------------ main


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="symles",
        description="symmetry-preserving LES closure laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("dns", "run the forced DNS and write spectral snapshots"),
        ("filter", "filter DNS snapshots into training pairs"),
        ("train", "train a data-driven closure on the pair files"),
        ("evaluate", "compute all metric tables as CSV"),
        ("selftest", "run the fast invariant suite"),
        ("plot", "render figures from the evaluation CSV tables"),
    ):
        cmd = sub.add_parser(name, help=helptext)
        cmd.add_argument("--config", type=str, default=None, help="key = value file")
        cmd.add_argument("--seed", type=int, default=None, help="override seed")
        cmd.add_argument(
            "--model",
            type=str,
            default=None,
            choices=closures.MODEL_NAMES,
            help="model to train / restrict evaluation to",
        )
        cmd.add_argument("--out", type=str, default=None, help="output directory")
    return parser


def _resolve_config(args) -> RunConfig:
    config = parse_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config.seed = args.seed
    if args.model is not None:
        config.model = args.model
    if args.out is not None:
        config.out_dir = args.out
    config.validate()
    return config


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return cmd_selftest(args.out)
        config = _resolve_config(args)
        if args.command == "dns":
            return cmd_dns(config)
        if args.command == "filter":
            return cmd_filter(config)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "evaluate":
            return cmd_evaluate(config, only_model=args.model)
        if args.command == "plot":
            from . import plots

            return plots.cmd_plot(config)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
