"""Serialization of stability reports (YAML/JSON documents and CSV).

Floats are written in shortest round-trip form and keys in a fixed
order, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import io
import json

import numpy as np
import yaml

from .network import ModelSpec
from .spectral import ConditionReport, StabilityReport
from .steady import SteadyState


def _mode_id(mode_id):
    return list(mode_id) if isinstance(mode_id, tuple) else mode_id


def _mode_label(mode_id) -> str:
    return ":".join(map(str, mode_id)) if isinstance(mode_id, tuple) else str(mode_id)


def _complex(z) -> list[float]:
    return [float(z.real), float(z.imag)]


def condition_dict(cr: ConditionReport) -> dict:
    return {"applicable": cr.applicable, "i_star": cr.i_star,
            "details": dict(cr.details), "reason": cr.reason}


def steady_state_dict(ss: SteadyState, names=None) -> dict:
    out = {"u_star": ss.u_star, "v_star": [float(x) for x in ss.v_star],
           "residual_norm": ss.residual_norm, "nonnegative": ss.nonnegative}
    if names is not None:
        out["species"] = list(names)
    return out


def report_dict(report: StabilityReport, model: ModelSpec, ss: SteadyState) -> dict:
    return {
        "model": {
            "species": model.network.names,
            "chemoattractant": model.network.names[model.chemoattractant_index],
            "alpha": [float(a) for a in model.alpha],
            "chi": model.chi,
            "D": model.D,
            "D_tilde": [float(d) for d in model.D_tilde],
            "domain": {"kind": model.domain.kind,
                       **dict(zip(("L",) if model.domain.kind == "interval" else ("Lx", "Ly"),
                                  model.domain.lengths))},
        },
        "steady_state": steady_state_dict(ss),
        "verdict": {
            "unstable": report.unstable,
            "overall_max_re": report.overall_max_re,
            "dominant_mode": _mode_id(report.dominant_mode),
            "marginal": report.marginal,
            "neutral": [{"mode": _mode_id(m), "eigenvalue": _complex(z)}
                        for m, z in report.neutral],
            "tail_cutoff_mu": report.tail_cutoff_mu,
            "tail_certified": report.tail_certified,
        },
        "suff1": condition_dict(report.suff1),
        "suff2": condition_dict(report.suff2),
        "modes": [{"mode": _mode_id(r.mode_id), "mu": r.mu, "max_re": r.max_re,
                   "eigenvalues": [_complex(z) for z in r.eigenvalues]}
                  for r in report.per_mode],
        **report.extra,
    }


def dump_yaml(doc: dict) -> str:
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)


def dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def modes_csv(report: StabilityReport) -> str:
    """One row per mode: ``mode_id,mu,max_re,max_abs_im`` (imaginary part
    taken at the eigenvalue attaining ``max_re``)."""
    buf = io.StringIO()
    buf.write("mode_id,mu,max_re,max_abs_im\n")
    for r in report.per_mode:
        k = int(np.argmax(r.eigenvalues.real))
        buf.write(f"{_mode_label(r.mode_id)},{r.mu!r},{r.max_re!r},"
                  f"{float(abs(r.eigenvalues[k].imag))!r}\n")
    return buf.getvalue()


def csv_table(header: list[str], rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_cell(x) for x in row) + "\n")
    return buf.getvalue()


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)
