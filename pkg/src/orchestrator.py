import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from src.config import RunConfig
from src.dtn import DtNPair, dtn_symmetry_residual, flat_dtn_multiplier
from src.eos import EosParams
from src.errors import CollinearFields, ConfigError, StabilityViolated, ToolkitError
from src.geometry import InterfaceProfile, SlabGrid, build_cutoff, flatten
from src.ingestion import TraceIngestion
from src.interface_evolution import (InterfaceState, dispersion_relation, effective_coefficients,
                                     ellipticity_direction, energy_functionals, gronwall_constant,
                                     measure_frequency, measure_growth_rate, step_linearized)
from src.norms import embedding_spot_check, energy_layer_sweep, manufactured_history, manufactured_interface
from src.paradiff import PLCutoffs, SpectralField
from src.report_generator import ReportWriter, summarize_checks
from src.spectral import HorizontalGrid
from src.stability import (TwoPhaseTrace, check_stability_2d, check_stability_3d, ellipticity_form,
                           hyperbolicity_check, mu_margin_check, quotient_convention_report, solve_mu_2d,
                           solve_mu_3d)
from src.symbols import (PsiJets, homogeneity_residual, sample_points, symbol_curvature, symbol_dtn,
                         symbol_symmetrizers, symmetrization_residual)
from src.verification import VerificationSuite
from utils.logger import setup_logger

logger = setup_logger("orchestrator")

# the ε sweep only measures scaling, so it runs on a coarse slab
SWEEP_NH = 8
SWEEP_NV = 12


def _check(passed: bool, criterion: str, **measured) -> Dict[str, Any]:
    return {"passed": bool(passed), "criterion": criterion, "measured": measured}


class ToolkitOrchestrator:
    """
    Runs one CLI verb end to end: load inputs, compute, write the CSV tables and JSON report
    under the output directory, and append the run to the manifest.
    Toolkit errors are caught per verb and returned as a failed result with their stage.
    """

    MANIFEST_FILE = "run_manifest.json"
    VERBS = ("check-stability", "compute-mu", "dtn", "symbols", "evolve", "energies", "verify")

    def __init__(self, config: RunConfig, output_dir: Optional[str] = None):
        self.config = config
        self.output_dir = output_dir or config.output_dir
        self.writer = ReportWriter(self.output_dir, config)
        self.cutoffs = PLCutoffs(config.cutoffs.eps1, config.cutoffs.eps2)
        self.eos = EosParams(**config.eos.model_dump())

    @property
    def manifest_path(self) -> str:
        return os.path.join(self.output_dir, self.MANIFEST_FILE)

    def _record_run(self, record: Dict[str, Any]):
        """Appends a run record to the manifest in the output directory."""
        manifest: Dict[str, List] = {"runs": []}
        if os.path.exists(self.manifest_path):
            try:
                with open(self.manifest_path, "r", encoding="utf-8") as f:
                    manifest = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                logger.error(f"Failed to read manifest, starting a new one: {e}")
        manifest.setdefault("runs", []).append(record)
        with open(self.manifest_path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2)

    def run(self, verb: str, **kwargs) -> Dict[str, Any]:
        """
        Executes one verb.
        :param verb: one of VERBS.
        :param kwargs: verb inputs (`trace_csv` for the trace verbs, `checks` and `jobs` for verify).
        """
        if verb not in self.VERBS:
            raise ValueError(f"unknown verb {verb!r}; expected one of {self.VERBS}")
        started = datetime.now()
        run_id = f"{verb}_{started.strftime('%Y%m%d_%H%M%S')}"
        logger.info(f"Starting {verb} (run {run_id}, seed {self.config.seed}, output {self.output_dir})")
        handler = getattr(self, "_" + verb.replace("-", "_"))
        try:
            payload = handler(**kwargs)
            summary = summarize_checks(payload.get("checks", {}))
            result = {"status": "success", "verb": verb, "run_id": run_id, **payload,
                      "all_passed": summary["all_passed"], "failed_checks": summary["failed"]}
            level = logging.INFO if summary["all_passed"] else logging.WARNING
            logger.log(level, f"{verb} finished: {summary['passed']}/{summary['total']} checks passed")
        except ToolkitError as e:
            error_msg = f"{verb} failed at stage [{e.stage}]: {e}"
            logger.error(error_msg)
            result = {"status": "failed", "verb": verb, "run_id": run_id, "error": error_msg, "stage": e.stage}

        self._record_run({
            "run_id": run_id,
            "verb": verb,
            "status": result["status"],
            "all_passed": result.get("all_passed"),
            "config_hash": self.writer.config_hash,
            "started_at": started.isoformat(),
            "completed_at": datetime.now().isoformat(),
            "artifacts": result.get("artifacts", {}),
            "error": result.get("error"),
        })
        return result

    # --- shared inputs ----------------------------------------------------------------------

    def _trace(self, trace_csv: Optional[str]) -> TwoPhaseTrace:
        path = trace_csv or self.config.trace_csv
        if not path:
            raise ConfigError("this verb needs a trace CSV (--trace or trace_csv in the config)")
        trace = TraceIngestion().process_csv(path)
        trace.validate(self.config.eos.rho_floor)
        return trace

    def _slab(self) -> SlabGrid:
        g = self.config.grid
        return SlabGrid(g.d, g.H, g.Nh, g.Nv, g.stretch)

    def _background_trace(self) -> TwoPhaseTrace:
        """Single-point trace from the constant evolution background, cut to d - 1 components."""
        ev = self.config.evolution
        dims = self.config.grid.d - 1
        pick = lambda v: np.asarray(v[:dims], dtype=float)
        return TwoPhaseTrace.from_arrays(ev.rho_plus, ev.rho_minus, pick(ev.v_plus), pick(ev.v_minus),
                                         pick(ev.b_plus), pick(ev.b_minus))

    def _mode_state(self) -> InterfaceState:
        ev = self.config.evolution
        grid = HorizontalGrid(ev.Nh, self.config.grid.d - 1)
        psi = SpectralField.from_function(grid, lambda *x: ev.amplitude * np.cos(ev.mode * x[0]))
        return InterfaceState(psi, psi * 0.0, 0.0, ev.sigma)

    def _wave_vector(self) -> List[float]:
        return [float(self.config.evolution.mode)] + [0.0] * (self.config.grid.d - 2)

    # --- verbs ------------------------------------------------------------------------------

    def _check_stability(self, trace_csv: Optional[str] = None) -> Dict[str, Any]:
        trace = self._trace(trace_csv)
        st = self.config.stability
        n = trace.rho_plus.size
        logger.info(f"Stage 1/3: stability margins on {n} points ({trace.dims + 1}D)")
        if trace.dims == 2:
            report = check_stability_3d(trace, st.delta0, st.allow_wide_delta0)
            pointwise = (report.pointwise_upper >= 0) & (report.pointwise_lower >= 0)
        else:
            report = check_stability_2d(trace, st.delta0, st.allow_wide_delta0)
            pointwise = (report.pointwise_upper > 0) & (report.pointwise_lower > 0)

        logger.info("Stage 2/3: symmetrizer μ and hyperbolicity")
        mu, mu_error, hyper = None, None, None
        try:
            mu = solve_mu_3d(trace, st.delta1) if trace.dims == 2 else solve_mu_2d(trace, st.delta1)
            hyper = hyperbolicity_check(trace, mu)
        except (CollinearFields, StabilityViolated) as e:
            mu_error = str(e)
            logger.warning(f"No symmetrizer for this trace: {e}")

        logger.info("Stage 3/3: ellipticity form")
        ell = ellipticity_form(trace, st.sweep_directions)

        table = {"point": np.arange(n), "margin_upper": report.pointwise_upper.ravel(),
                 "margin_lower": report.pointwise_lower.ravel(), "stable": pointwise.ravel(),
                 "ellipticity": ell.pointwise.ravel()}
        if mu is not None:
            table.update({"mu_plus": mu.mu_plus.ravel(), "mu_minus": mu.mu_minus.ravel(),
                          "min_eig_plus": hyper["min_eig_plus"].ravel(), "min_eig_minus": hyper["min_eig_minus"].ravel()})
        csv_path = self.writer.write_csv("stability_points.csv", pd.DataFrame(table), "stability_points")

        checks = {
            "stability_condition": _check(report.holds, "stability margins non-negative at every point",
                                          margin_upper=report.margin_upper, margin_lower=report.margin_lower),
            "ellipticity": _check(ell.infimum > 0, "ellipticity form positive in every direction",
                                  infimum=ell.infimum, closed_form=ell.closed_form),
        }
        if hyper is not None:
            checks["hyperbolicity_signs"] = _check(hyper["agree"], "eigenvalue and determinant signs agree",
                                                   hyperbolic=hyper["hyperbolic"])
        payload = {
            "points": n,
            "stability": report.to_dict(),
            "mu": None if mu is None else {"jump_residual": mu.jump_residual,
                                           "max_abs_plus": float(np.max(np.abs(mu.mu_plus))),
                                           "max_abs_minus": float(np.max(np.abs(mu.mu_minus)))},
            "mu_error": mu_error,
            "hyperbolicity": None if hyper is None else {
                "agree": hyper["agree"], "hyperbolic": hyper["hyperbolic"],
                "min_eig_plus": float(np.min(hyper["min_eig_plus"])),
                "min_eig_minus": float(np.min(hyper["min_eig_minus"]))},
            "ellipticity": ell.to_dict(),
            "unstable_direction": ell.to_dict()["direction"] if ell.infimum <= 0 else None,
            "checks": checks,
        }
        json_path = self.writer.write_json("stability_report.json", payload)
        return {**payload, "artifacts": {"points": csv_path, "report": json_path}}

    def _compute_mu(self, trace_csv: Optional[str] = None) -> Dict[str, Any]:
        trace = self._trace(trace_csv)
        st = self.config.stability
        logger.info(f"Solving for μ on {trace.rho_plus.size} points")
        mu = solve_mu_3d(trace, st.delta1) if trace.dims == 2 else solve_mu_2d(trace, st.delta1)
        pointwise = np.abs(trace.jump_v - (mu.mu_plus * trace.b_plus - mu.mu_minus * trace.b_minus)).max(axis=0)
        frame = pd.DataFrame({"point": np.arange(trace.rho_plus.size), "mu_plus": mu.mu_plus.ravel(),
                              "mu_minus": mu.mu_minus.ravel(), "jump_residual": pointwise.ravel()})
        csv_path = self.writer.write_csv("mu_table.csv", frame, "mu_table")

        scale = max(1.0, float(np.max(np.abs(trace.jump_v))))
        checks = {"jump_identity": _check(mu.jump_residual < 1e-12 * scale,
                                          "|[v] - (μ⁺b⁺ - μ⁻b⁻)| < 1e-12", residual=mu.jump_residual)}
        payload: Dict[str, Any] = {"points": int(trace.rho_plus.size), "dimension": trace.dims + 1,
                                   "jump_residual": mu.jump_residual}
        if trace.dims == 2:
            payload["quotient_convention"] = quotient_convention_report(trace, mu)
            stable = check_stability_3d(trace, st.delta0, st.allow_wide_delta0)
            if stable.holds:
                margin = mu_margin_check(trace, mu, st.delta0)
                payload["mu_margin"] = margin
                checks["mu_margin"] = _check(margin <= 1e-12, "|μ̄±|a± <= 1 - δ0 where the condition holds",
                                             margin=margin)
        payload["checks"] = checks
        json_path = self.writer.write_json("mu_report.json", payload)
        return {**payload, "artifacts": {"table": csv_path, "report": json_path}}

    def _dtn(self) -> Dict[str, Any]:
        grid = self._slab()
        amp = self.config.psi_amplitude
        k = self.config.f_mode
        logger.info(f"Stage 1/2: flattening ψ = {amp:g} sin(x1) on {grid.shape}")
        cutoff = build_cutoff(grid.H, amp)
        profile = flatten(InterfaceProfile.from_function(grid, lambda *x: amp * np.sin(x[0])), cutoff)
        ops = DtNPair(profile, self.config.solver)

        logger.info(f"Stage 2/2: 𝔑± on f = cos({k} x1)")
        h = grid.horizontal
        f = SpectralField.from_function(h, lambda *x: np.cos(k * x[0]))
        frame = f.spectrum_frame().rename(columns={"abs": "f_abs"})
        frame = frame[[f"k{j + 1}" for j in range(h.dims)] + ["f_abs"]].copy()
        for sign, tag in ((1, "plus"), (-1, "minus")):
            Nf = ops.op(sign)(f)
            frame[f"abs_{tag}"] = np.abs(Nf.coefficients).ravel()
            with np.errstate(divide="ignore", invalid="ignore"):
                frame[f"ratio_{tag}"] = np.where(frame["f_abs"] > 1e-12, frame[f"abs_{tag}"] / frame["f_abs"], np.nan)
        flat = amp == 0.0
        if flat:
            frame["oracle"] = flat_dtn_multiplier(h.kmag.ravel(), grid.H)
        csv_path = self.writer.write_csv("dtn_spectrum.csv", frame, "dtn_spectrum")

        g = SpectralField.from_function(h, lambda *x: np.cos(k * x[0] + 0.3) + 0.5 * np.cos(2 * x[0]))
        symmetry = max(dtn_symmetry_residual(f, g, ops.plus), dtn_symmetry_residual(f, g, ops.minus))
        checks = {"symmetry": _check(symmetry < 1e-8, "⟨𝔑f, g⟩ = ⟨f, 𝔑g⟩ to 1e-8", residual=symmetry)}
        mode_row = frame["f_abs"] > 1e-12
        if flat:
            error = float(np.max(np.abs(frame.loc[mode_row, "ratio_plus"] - frame.loc[mode_row, "oracle"])))
            checks["flat_oracle"] = _check(error < 1e-6, "eigenvalue of 𝔑 on cos(k x1) equals k tanh(Hk) to 1e-6",
                                           error=error)
        payload = {"f_mode": k, "profile": profile.to_dict(), "eigenvalue_plus": float(frame.loc[mode_row, "ratio_plus"].max()),
                   "eigenvalue_minus": float(frame.loc[mode_row, "ratio_minus"].max()),
                   "flat_oracle": float(flat_dtn_multiplier(k, grid.H)), "checks": checks}
        json_path = self.writer.write_json("dtn_report.json", payload)
        return {**payload, "artifacts": {"spectrum": csv_path, "report": json_path}}

    def _symbols(self) -> Dict[str, Any]:
        cfg = self.config
        grid = HorizontalGrid(cfg.grid.Nh, cfg.grid.d - 1)
        amp = cfg.psi_amplitude
        psi = SpectralField.from_function(grid, lambda *x: amp * np.sin(x[0]))
        jets = PsiJets.from_field(psi)
        m, nn, big_m = symbol_symmetrizers(psi, cfg.sobolev_s, jets)
        symbols = {"dtn+": symbol_dtn(psi, 1, jets), "dtn-": symbol_dtn(psi, -1, jets),
                   "curvature": symbol_curvature(psi, jets), "m": m, "n": nn, "M": big_m}
        index, xi = sample_points(jets, cfg.samples, cfg.seed)

        logger.info(f"Stage 1/2: symmetrization defects at {cfg.samples} samples")
        residuals = symmetrization_residual(psi, cfg.samples, cfg.seed, cfg.sobolev_s)

        logger.info(f"Stage 2/2: homogeneity and sample tables for {len(symbols)} symbols")
        homogeneity = {name: homogeneity_residual(sym, index, xi) for name, sym in symbols.items()}
        rows = []
        for name, sym in symbols.items():
            for row in sym.sample_table(index, xi):
                flat = {"symbol": name, "order": sym.order, "point": row["point"]}
                flat.update({f"xi{j + 1}": x for j, x in enumerate(row["xi"])})
                flat.update({"principal_re": row["principal"][0], "principal_im": row["principal"][1],
                             "sub_re": row["sub"][0], "sub_im": row["sub"][1]})
                rows.append(flat)
        csv_path = self.writer.write_csv("symbol_samples.csv", pd.DataFrame(rows), "symbol_samples")

        checks = {
            "symmetrization": _check(residuals["order3"] < 1e-10 and residuals["order2"] < 1e-10
                                     and residuals["re_m05"] < 1e-10 and residuals["factorization"] < 1e-12,
                                     "order-3 and order-2 defects < 1e-10, factorisation < 1e-12", **residuals),
            "homogeneity": _check(max(homogeneity.values()) < 1e-10,
                                  "principal parts homogeneous of their order to 1e-10", **homogeneity),
        }
        payload = {"samples": cfg.samples, "residuals": residuals, "homogeneity": homogeneity,
                   "tables": {name: sym.sample_table(index[:5], xi[:, :5]) for name, sym in symbols.items()},
                   "checks": checks}
        json_path = self.writer.write_json("symbols_report.json", payload)
        return {**payload, "artifacts": {"samples": csv_path, "report": json_path}}

    def _evolve(self) -> Dict[str, Any]:
        ev = self.config.evolution
        coeffs = effective_coefficients(self._background_trace())
        k = self._wave_vector()
        oracle = dispersion_relation(coeffs, k, ev.sigma, self.config.grid.H, "paradiff", self.cutoffs)
        oracle_dtn = dispersion_relation(coeffs, k, ev.sigma, self.config.grid.H, "dtn")
        rate = max(oracle["frequency"], oracle["growth_rate"])
        if rate == 0.0:
            raise ConfigError(f"mode {ev.mode} neither oscillates nor grows on this background; nothing to measure")
        t_end = ev.periods * 2 * np.pi / rate
        logger.info(f"Stage 1/2: stepping mode {ev.mode} to t={t_end:.4g} "
                    f"({'stable' if oracle['stable'] else 'unstable'} by the normal-mode oracle)")
        traj = step_linearized(self._mode_state(), coeffs, ev.sigma, dt=ev.dt, t_end=t_end, cfl=ev.cfl,
                               blowup_factor=ev.blowup_factor, cutoffs=self.cutoffs, s=self.config.sobolev_s)
        csv_path = self.writer.write_csv("trajectory.csv", traj.to_frame(), "trajectory")

        logger.info("Stage 2/2: measuring against the oracle")
        growth = measure_growth_rate(traj)
        summary: Dict[str, Any] = {"oracle": oracle, "oracle_dtn": oracle_dtn, "dt": traj.dt, "steps": traj.steps,
                                   "t_end": traj.times[-1], "blew_up": traj.blew_up, "growth_rate": growth,
                                   "gronwall_constant": gronwall_constant(traj)}
        if oracle["stable"]:
            frequency = measure_frequency(traj, drift=oracle["drift"])
            error = abs(frequency / oracle["frequency"] - 1.0)
            summary["frequency"] = frequency
            checks = {
                "frequency": _check(error < 0.01, "measured frequency within 1% of the oracle",
                                    measured=frequency, oracle=oracle["frequency"], error=error),
                "bounded": _check(abs(growth) < 1e-3, "|growth rate| < 1e-3", growth_rate=growth),
            }
        else:
            error = abs(growth / oracle["growth_rate"] - 1.0)
            checks = {"growth_rate": _check(error < 0.05, "measured growth within 5% of the oracle",
                                            measured=growth, oracle=oracle["growth_rate"], error=error)}
        summary["checks"] = checks
        json_path = self.writer.write_json("evolve_summary.json", summary)
        return {**summary, "artifacts": {"trajectory": csv_path, "summary": json_path}}

    def _energies(self) -> Dict[str, Any]:
        cfg = self.config
        coeffs = effective_coefficients(self._background_trace())
        state = self._mode_state()
        logger.info("Stage 1/3: ℰ and ℰ̃ on the configured mode")
        energy, energy_tilde = energy_functionals(state, coeffs, cfg.evolution.sigma, cfg.sobolev_s,
                                                  cutoffs=self.cutoffs)
        direction = ellipticity_direction(coeffs)

        logger.info(f"Stage 2/3: energy layers over ε = {cfg.eps_sweep}")
        g = cfg.grid
        coarse = SlabGrid(g.d, g.H, min(g.Nh, SWEEP_NH), min(g.Nv, SWEEP_NV), g.stretch)
        phases = [manufactured_history(coarse, 1), manufactured_history(coarse, -1)]
        sigma = cfg.evolution.sigma or 0.1
        rows, slopes = energy_layer_sweep(phases, manufactured_interface(coarse), coarse, self.eos, sigma,
                                          cfg.eps_sweep)
        sweep_path = self.writer.write_csv("energy_layers.csv", pd.DataFrame(rows), "energy_layers")

        logger.info("Stage 3/3: embedding spot check")
        embedding = embedding_spot_check(self._slab())
        frame = pd.DataFrame([{"function": name, **vals} for name, vals in embedding.items()])
        embed_path = self.writer.write_csv("embedding.csv", frame, "embedding")

        checks = {
            "energy_nonnegative": _check(energy >= 0, "ℰ >= 0", energy=energy),
            "ellipticity_consistency": _check(direction["agree"] and (direction["infimum"] <= 0 or energy_tilde >= -1e-14),
                                              "ℰ̃ >= 0 when the form is positive; directions agree with the stability module",
                                              energy_tilde=energy_tilde, infimum=direction["infimum"]),
        }
        if len(cfg.eps_sweep) > 1:
            checks["eps_slopes"] = _check(all(abs(s - 4 * l) <= 0.1 for l, s in slopes.items()),
                                          "layer l scales like ε^{4l} ± 0.1",
                                          **{f"slope_l{l}": s for l, s in slopes.items()})
        payload = {"energy": energy, "energy_tilde": energy_tilde, "ellipticity_direction": direction,
                   "eps_slopes": slopes, "embedding_max_sup_over_star": max(r["sup_over_star"] for r in embedding.values()),
                   "checks": checks}
        json_path = self.writer.write_json("energies_report.json", payload)
        return {**payload, "artifacts": {"layers": sweep_path, "embedding": embed_path, "report": json_path}}

    def _verify(self, checks: Optional[List[str]] = None, jobs: Optional[int] = None) -> Dict[str, Any]:
        suite = VerificationSuite(self.config)
        try:
            results = suite.run(checks, jobs)
        except ValueError as e:
            raise ConfigError(str(e))
        report = {name: r.to_dict() for name, r in results.items()}
        summary = summarize_checks(report)
        json_path = self.writer.write_json("verify_report.json", {"summary": summary, "checks": report})
        frame = pd.DataFrame([{"check": name, "passed": r.passed, "criterion": r.criterion, "error": r.error or ""}
                              for name, r in results.items()])
        csv_path = self.writer.write_csv("verify_summary.csv", frame, "verify_summary")
        return {"summary": summary, "checks": report, "artifacts": {"report": json_path, "summary": csv_path}}


def run_verb(verb: str, config: RunConfig, output_dir: Optional[str] = None, **kwargs) -> Dict[str, Any]:
    return ToolkitOrchestrator(config, output_dir).run(verb, **kwargs)
