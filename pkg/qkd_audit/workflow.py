import logging
import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from qkd_audit import bounds, coherent, coupling, metrics, qkdsim, qstate
from qkd_audit.config import AppConfig
from qkd_audit.errors import InvalidParameter, SchemaViolation
from qkd_audit.report import quantity, write_report
from qkd_audit.scenario import ScenarioFile

logger = logging.getLogger(__name__)

# 每个网格点都要解一次 LP，网格保持稀疏
DELTA_GRID = np.linspace(0.0, 0.5, 11)
ALTERNATIVE_COUPLINGS = 1000
BOUND_SLACK = 1e-9

Table = Optional[Dict[str, Any]]


def _metric(result: metrics.MetricResult) -> Dict[str, Any]:
    data = quantity(result.value)
    data["method"] = result.method.value
    data["upper_bound"] = None if result.upper_bound is None else quantity(result.upper_bound)
    return data


def _witness(w: coupling.NonuniformityWitness) -> Dict[str, Any]:
    return {
        "key_index": w.key_index,
        "probability": quantity(w.probability),
        "excess_ratio": w.excess_ratio,
        "delta_to_uniform": quantity(w.delta_to_uniform),
    }


def _require_together(params: Dict[str, Any], keys: Tuple[str, ...]) -> bool:
    """一组可选字段要么全给要么全不给。"""

    given = [k for k in keys if params.get(k) is not None]
    if given and len(given) != len(keys):
        missing = next(k for k in keys if params.get(k) is None)
        raise SchemaViolation(missing, f"字段 {', '.join(given)} 需要同时提供 {missing}")
    return bool(given)


class ScenarioRunner:
    def __init__(self, config: AppConfig):
        self.config = config
        self.numerics = config.numerics
        self._handlers: Dict[str, Callable[[Dict[str, Any], np.random.Generator], Tuple[Dict, Table]]] = {
            "metrics": self.run_metrics,
            "coupling": self.run_coupling,
            "bounds": self.run_bounds,
            "bb84": self.run_bb84,
            "coherent": self.run_coherent,
            "table1": self.run_table1,
        }

    def evaluate(self, scenario: ScenarioFile) -> Tuple[Dict[str, Any], Table]:
        logger.info("执行场景 %s（%s）", scenario.kind, scenario.path)
        rng = np.random.default_rng(scenario.rng_seed)
        results, table = self._handlers[scenario.kind](scenario.resolved(), rng)
        payload = {
            "kind": scenario.kind,
            "scenario_file": os.path.basename(scenario.path),
            "scenario": scenario.resolved(),
            "config": self.config.to_dict(),
            "results": results,
        }
        return payload, table

    def run(self, scenario: ScenarioFile, out_dir: str) -> List[Path]:
        payload, table = self.evaluate(scenario)
        written = write_report(out_dir, payload, table, write_html=self.config.report.write_html)
        logger.info("报告已写入 -> %s", out_dir)
        return written

    # ---- metrics ----

    def run_metrics(self, p: Dict[str, Any], rng: np.random.Generator) -> Tuple[Dict, Table]:
        l, dim_e = p["key_bits"], p["dim_e"]
        if l < 1 or dim_e < 1:
            raise InvalidParameter(f"key_bits 与 dim_e 须 >= 1：key_bits={l}, dim_e={dim_e}")
        ensemble = p["ensemble"]
        if ensemble == "random":
            cq = qstate.random_cq_state(l, dim_e, rng)
        elif ensemble == "diagonal":
            cq = qstate.diagonal_cq_state(l, dim_e, rng)
        elif ensemble == "pure_overlap":
            if p["overlap"] is None:
                raise SchemaViolation("overlap", "ensemble=pure_overlap 需要 overlap")
            cq = qstate.pure_overlap_cq_state(l, dim_e, p["overlap"])
        else:
            raise SchemaViolation("ensemble", f"未知系综 {ensemble}，可选 random / pure_overlap / diagonal")

        dim_cap = self.numerics.dim_cap
        d = metrics.security_distance(cq, dim_cap=dim_cap)
        chi = metrics.holevo_chi(cq)
        guess = metrics.guessing_probability(cq, dim_cap=dim_cap)
        witness = coupling.nonuniformity_witness(metrics.ClassicalDistribution(cq.probs / cq.probs.sum()))
        floor = 2.0 ** (-l)

        # 计算基测量后的经典联合表 P(k, y) = p(k)·⟨y|ρ_E^k|y⟩
        joint = np.array([prob * np.real(np.diag(rho.matrix)) for prob, rho in cq.entries])
        joint = joint / joint.sum()
        results = {
            "key_bits": l,
            "dim_e": dim_e,
            "ensemble": ensemble,
            "trace_distance": _metric(d),
            "holevo_chi": chi,
            "guessing_probability": _metric(guess),
            "witness": _witness(witness),
            "holevo_bound_holds": 2.0 * d.value ** 2 <= chi + BOUND_SLACK,
            "guess_bound_residual": floor + d.value - guess.value,
            "guess_bound_holds": guess.value <= floor + d.value + BOUND_SLACK,
            "measured_min_entropy": metrics.min_entropy(joint),
        }
        if p["smoothing_eps"] is not None:
            results["smoothing_eps"] = p["smoothing_eps"]
            results["measured_smooth_min_entropy"] = metrics.smooth_min_entropy(
                joint, p["smoothing_eps"], support_cap=self.numerics.support_cap
            )
        return results, None

    # ---- coupling ----

    def run_coupling(self, p: Dict[str, Any], rng: np.random.Generator) -> Tuple[Dict, Table]:
        dist_p = metrics.ClassicalDistribution(p["p"])
        dist_q = metrics.ClassicalDistribution(p["q"])
        delta = metrics.variational_distance(dist_p, dist_q)
        c = coupling.maximal_coupling(dist_p, dist_q)
        mismatch = coupling.mismatch_probability(c)
        alternatives = [
            coupling.mismatch_probability(coupling.random_transport_plan(dist_p, dist_q, rng))
            for _ in range(ALTERNATIVE_COUPLINGS)
        ]
        results: Dict[str, Any] = {
            "variational_distance": quantity(delta),
            "mismatch_probability": quantity(mismatch),
            "joint": c.joint.tolist(),
            "marginal_error": float(
                max(np.abs(c.row_marginal() - dist_p.probs).max(), np.abs(c.column_marginal() - dist_q.probs).max())
            ),
            "alternative_couplings": len(alternatives),
            "alternative_min_mismatch": quantity(min(alternatives)),
            "alternatives_dominated": all(m >= delta - 1e-12 for m in alternatives),
        }
        keys = ("counterexample_key_bits", "counterexample_eps")
        if _require_together(p, keys):
            dist, witness = coupling.interpretation_counterexample(p["counterexample_key_bits"], p["counterexample_eps"])
            results["counterexample"] = {
                "key_bits": p["counterexample_key_bits"],
                "eps": p["counterexample_eps"],
                "witness": _witness(witness),
                "min_probability": quantity(float(dist.probs.min())),
                "every_key_biased": bool(np.all(np.abs(dist.probs * dist.support_size - 1.0) > 0)),
            }
        return results, None

    # ---- bounds ----

    def _logprob(self, lp: bounds.LogProb) -> Dict[str, Any]:
        return {
            "log2": lp.log2_value,
            "log10": lp.log10,
            "decimal": bounds.render_log10(lp.log10, self.config.report.significant_digits),
        }

    def run_bounds(self, p: Dict[str, Any], rng: np.random.Generator) -> Tuple[Dict, Table]:
        eps, l, p_abort = p["eps"], p["key_bits"], p["p_abort"]
        results: Dict[str, Any] = {
            "shannon_requirement": self._logprob(bounds.shannon_requirement(l)),
            "brute_force_count": self._logprob(bounds.brute_force_count(l)),
            "avg_guess_bound": self._logprob(bounds.avg_guess_bound(eps, l)),
            "individual_guess_bound": self._logprob(bounds.individual_guess_bound(eps, l)),
            "markov_failure_fraction": bounds.markov_individual_failure(eps),
            "abort_adjusted_eps": bounds.abort_adjust(eps, p_abort),
        }
        if l <= coupling.MAX_EXHAUSTIVE_BITS and eps <= 1.0 - 2.0 ** (-l):
            extremal = bounds.extremal_distribution(eps, l)
            results["extremal"] = _witness(coupling.nonuniformity_witness(extremal))
        else:
            logger.info("l=%s 过大或 eps 越界，跳过极值分布", l)

        distance_bound = None
        if p["p_phase"] is not None:
            chain = bounds.hayashi_tsurumaru_chain(eps, p["p_phase"])
            distance_bound = chain.distance_bound
            results["hayashi_tsurumaru"] = {
                "eps_hs": quantity(chain.eps_hs),
                "s": chain.s,
                "p_phase": quantity(chain.p_phase),
                "distance_bound": quantity(chain.distance_bound),
            }
        if p["eps_hs"] is not None:
            s = bounds.gaussian_tail_inverse(p["eps_hs"])
            results["gaussian_tail"] = {"eps_hs": quantity(p["eps_hs"]), "s": s, "tail": quantity(bounds.gaussian_tail(s))}

        keys = ("sample_errors", "sample_size", "total_errors", "key_size")
        if _require_together(p, keys):
            est = bounds.phase_error_estimate(*(p[k] for k in keys), eps=eps)
            results["phase_error_estimate"] = {
                "sample_errors": est.sample_errors,
                "total_errors": est.total_errors,
                "p_shift": quantity(est.p_shift),
                "p_shift_hat": quantity(est.p_shift_hat),
                "eps_hs": quantity(est.eps_hs),
                "s": est.s,
                "covers": est.covers,
            }

        if p["delta"] is not None:
            d = p["distance"] if p["distance"] is not None else distance_bound
            if d is None:
                raise SchemaViolation("distance", "给定 delta 时需要 distance 或 p_phase")
            check = bounds.tomamichel_check(d, p["delta"], p_abort, eps)
            results["tomamichel"] = {
                "distance": quantity(check.d),
                "delta": quantity(check.delta),
                "adjusted_delta": quantity(check.adjusted_delta),
                "d_within_delta": check.d_within_delta,
                "within_eps": check.within_eps,
            }
        return results, None

    # ---- bb84 ----

    def run_bb84(self, p: Dict[str, Any], rng: np.random.Generator) -> Tuple[Dict, Table]:
        sim = self.config.simulation
        if p["raw_bits"] > sim.max_raw_bits:
            raise InvalidParameter(f"raw_bits={p['raw_bits']} 超过配置上限 {sim.max_raw_bits}")
        if p["key_bits"] > sim.max_key_bits:
            raise InvalidParameter(f"key_bits={p['key_bits']} 超过配置上限 {sim.max_key_bits}")
        for key, enum in (("ec_mode", qkdsim.ECMode), ("attack", qkdsim.AttackKind)):
            choices = [e.value for e in enum]
            if p[key] not in choices:
                raise SchemaViolation(key, f"字段 {key} 取值 {p[key]!r} 非法，可选：{', '.join(choices)}")
        config = qkdsim.ProtocolConfig(
            raw_bits=p["raw_bits"],
            key_bits=p["key_bits"],
            sample_fraction=p["sample_fraction"],
            ec_mode=p["ec_mode"],
            ec_parity_bits=p["ec_parity_bits"],
            pa_seed=p["pa_seed"],
            rng_seed=p["rng_seed"],
            abort_threshold=sim.abort_threshold,
        )
        attack = qkdsim.AttackModel(kind=p["attack"], fraction=p["attack_fraction"])
        workers = p["workers"] if p["workers"] is not None else sim.workers
        run = qkdsim.run_bb84(
            config,
            attack,
            enumeration_cap=self.numerics.enumeration_cap,
            support_cap=self.numerics.support_cap,
            workers=workers,
        )
        grid = DELTA_GRID if run.sifted_joint is not None else None
        report = qkdsim.evaluate_security(run, delta_grid=grid, support_cap=self.numerics.support_cap)

        d = report.trace_distance.value
        nonuniform_or_dependent = (not report.key_uniform) or report.mutual_information > 1e-9
        results = {
            "transcript": {
                "alice_bases": run.transcript.alice_bases,
                "bob_bases": run.transcript.bob_bases,
                "sifted_positions": list(run.transcript.sifted_positions),
                "sample_positions": list(run.transcript.sample_positions),
                "key_positions": list(run.transcript.key_positions),
                "pa_seed": run.pa_seed,
                "leaked_parity_blocks": [list(b) for b in run.leaked_bits],
            },
            "eve_records": int(run.y_labels.size),
            "qber_estimate": quantity(run.qber_estimate),
            "abort": run.abort,
            "abort_probability": quantity(run.abort_probability),
            "trace_distance": _metric(report.trace_distance),
            "guessing_probability": _metric(report.guessing_probability),
            "holevo_chi": report.holevo_chi,
            "mutual_information": report.mutual_information,
            "witness": _witness(report.witness),
            "key_uniform": report.key_uniform,
            "guess_bound_residual": report.guess_bound_residual,
            "hmin_sifted": report.hmin_sifted,
            "leftover_hash_bound": quantity(report.leftover_hash_bound),
            "nonuniform_or_dependent": nonuniform_or_dependent if d > 1e-6 else None,
            "delta": None if report.delta is None else quantity(report.delta),
            "delta_argmin": report.delta_argmin,
            "d_within_delta": report.d_within_delta,
            "notes": list(report.notes),
        }
        return results, None

    # ---- coherent ----

    def run_coherent(self, p: Dict[str, Any], rng: np.random.Generator) -> Tuple[Dict, Table]:
        c = coherent.Constellation.psk(p["m"], p["mean_photon"])
        report = coherent.masked_channel_report(c, bob_key_known=p["bob_key_known"])
        results = {
            "m": c.m,
            "mean_photon": p["mean_photon"],
            "symmetric": coherent.is_symmetric(c),
            "prior_guess_error": quantity(1.0 - 1.0 / c.m),
            "channels": [
                {
                    "party": row.party,
                    "knowledge": row.knowledge,
                    "effect": row.effect,
                    "error": quantity(row.error),
                    "method": row.method,
                }
                for row in report.rows
            ],
        }
        return results, {"header": report.header(), "rows": report.as_rows()}

    # ---- table1 ----

    def run_table1(self, p: Dict[str, Any], rng: np.random.Generator) -> Tuple[Dict, Table]:
        table = bounds.table1_from(p["eps"], p["key_bits"])
        digits = self.config.report.significant_digits
        results = {
            "eps": p["eps"],
            "key_bits": p["key_bits"],
            "rows": [
                {
                    "label": row.label,
                    "log2": row.log2_value,
                    "log10": row.log10_value,
                    "rendered": row.rendered,
                    "decimal": bounds.render_log10(row.log10_value, digits),
                }
                for row in table.rows
            ],
        }
        return results, {"header": table.header(), "rows": table.as_rows()}
