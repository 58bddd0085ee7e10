"""Command-line interface: config ingestion, scenario execution, CSV export.

Usage: acdcdyn <command> --config <path> [--out <dir>] [--set key=value ...]

Commands: poles | bode | step | steady | sweep | spectrum | check.
Configs are JSON; every run writes its artifacts plus a manifest with the
fully resolved parameters and per-unit bases.  Identical configs produce
byte-identical CSVs (fixed 9-significant-digit formatting, fixed ordering).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .lti import (AlgebraicLoop, NoDcGain, PoleHit, SingularAtFrequency,
                  TooShort, dc_gain, fft_magnitude, poles, step_response)
from .network import EdgePole, SingularLL, check_assumption1
from .system import (ImproperController, NoDroop, _deep_set, _load_preset,
                     build, config_from_dict, steady_state)
from . import analysis

COMMANDS = ("poles", "bode", "step", "steady", "sweep", "spectrum", "check")

_NUMERIC_ERRORS = (AlgebraicLoop, SingularAtFrequency, NoDcGain, PoleHit,
                   TooShort, SingularLL, EdgePole, NoDroop,
                   analysis.NoInteriorPeak, np.linalg.LinAlgError)


class CliError(Exception):
    pass


class ParseError(CliError):
    """Config file is unreadable or not valid JSON."""


class ValidationError(CliError):
    """Config parsed but violates an invariant."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    scenario: object             # preset name or inline scenario dict
    overrides: dict
    options: dict


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.9g" % float(x)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(x) if not isinstance(x, str) else x
                             for x in row) + "\n")


def load_config(path: str, command: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise ParseError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}") from exc
    if command not in COMMANDS:
        raise ValidationError(f"unknown command {command!r}")
    if "scenario" not in data:
        raise ValidationError("config is missing the 'scenario' field")
    return RunConfig(command, data["scenario"], data.get("overrides", {}),
                     data.get("options", {}))


def _resolve_scenario(cfg: RunConfig) -> dict:
    if isinstance(cfg.scenario, str):
        try:
            data = _load_preset(cfg.scenario)
        except FileNotFoundError as exc:
            raise ValidationError(
                f"unknown preset {cfg.scenario!r}") from exc
    elif isinstance(cfg.scenario, dict):
        data = json.loads(json.dumps(cfg.scenario))
    else:
        raise ValidationError("'scenario' must be a preset name or an object")
    for dotted, value in cfg.overrides.items():
        try:
            _deep_set(data, dotted, value)
        except (KeyError, IndexError, TypeError) as exc:
            raise ValidationError(f"bad override {dotted!r}") from exc
    return data


def _apply_sets(cfg: RunConfig, sets: list[str]) -> RunConfig:
    overrides = dict(cfg.overrides)
    options = dict(cfg.options)
    for item in sets:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        if key.startswith("options."):
            options[key[len("options."):]] = value
        else:
            overrides[key] = value
    return RunConfig(cfg.command, cfg.scenario, overrides, options)


def run(cfg: RunConfig, out_dir: str) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"tool": "acdcdyn", "version": __version__,
                "command": cfg.command, "outputs": []}
    try:
        data = _resolve_scenario(cfg)
        manifest["scenario"] = data.get("scenario", "inline")
        manifest["resolved_parameters"] = data
        try:
            sysconf = config_from_dict(data)
        except (KeyError, ValueError, TypeError) as exc:
            raise ValidationError(f"invalid scenario description: {exc}")
        manifest["per_unit_base"] = {
            "s_base_va": sysconf.base.S_base,
            "v_base_ac_v": sysconf.base.V_base_ac,
            "v_base_dc_v": sysconf.base.V_base_dc,
            "omega_base_rad_s": sysconf.base.omega_base,
        }
        if cfg.command == "step" and any(
                c.tau_kd == 0.0 for c in sysconf.ctrl.values()):
            raise ValidationError(
                "ImproperController: tau_kd = 0 is not realizable")
        _dispatch(cfg, sysconf, out, manifest)
    except (CliError, ImproperController, ValueError, KeyError) as exc:
        _write_error(out, manifest, exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _NUMERIC_ERRORS as exc:
        _write_error(out, manifest, exc)
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    with open(out / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return 0


def _write_error(out: Path, manifest: dict, exc: Exception) -> None:
    record = {"error": type(exc).__name__, "message": str(exc),
              "manifest": manifest}
    with open(out / "error.json", "w", encoding="utf-8") as f:
        json.dump(record, f, indent=2, sort_keys=True)


def _dispatch(cfg: RunConfig, sysconf, out: Path, manifest: dict) -> None:
    opt = cfg.options
    if cfg.command == "poles":
        model = build(sysconf)
        rows = sorted(((p.value.real, p.value.imag, p.structural)
                       for p in poles(model.ss)),
                      key=lambda r: (r[0], r[1]))
        _write_csv(out / "poles.csv", ["re", "im", "structural"], rows)
        manifest["outputs"].append("poles.csv")

    elif cfg.command == "bode":
        model = build(sysconf)
        table = analysis.bode(
            model, opt["input"], opt["output"],
            f_min=opt.get("f_min_hz", 1e-2 / (2 * math.pi)),
            f_max=opt.get("f_max_hz", 1e4 / (2 * math.pi)),
            points=int(opt.get("points", 400)))
        _write_csv(out / "bode.csv", ["f_hz", "mag_db", "phase_deg"],
                   zip(table.f_hz, table.mag_db, table.phase_deg))
        manifest["outputs"].append("bode.csv")

    elif cfg.command == "step":
        model = build(sysconf)
        T = float(opt.get("t_end_s", 10.0))
        dt = float(opt.get("dt_s", 1e-3))
        amp = float(opt.get("amplitude", 1.0))
        ts = step_response(model.ss, opt["input"], T, dt)
        names = list(model.ss.output_names)
        cols = [ts.channels[n] * amp for n in names]
        _write_csv(out / "step.csv", ["t_s"] + names,
                   zip(ts.t, *cols))
        manifest["outputs"].append("step.csv")

    elif cfg.command == "steady":
        if "delta_p_l_pu" in opt:
            dp = float(opt["delta_p_l_pu"])
        else:
            dp = float(opt["delta_p_l_w"]) / sysconf.base.S_base
        st = steady_state(sysconf, dp)
        rows = [("delta_p_l", dp), ("domega", st.domega),
                ("dp_tg", st.dp_tg), ("dp_pv", st.dp_pv)]
        rows += [(f"dv_dc_{n}", v) for n, v in sorted(st.dv_dc.items())]
        rows += [(f"dp_ac_{n}", v) for n, v in sorted(st.dp_ac.items())]
        _write_csv(out / "steady.csv", ["quantity", "value_pu"], rows)
        manifest["outputs"].append("steady.csv")
        manifest["effective_droops"] = {"kappa_tg": st.kappa_tg,
                                        "kappa_pv": st.kappa_pv}

    elif cfg.command == "sweep":
        param = opt["parameter"]
        values = opt["values"]
        channel = (opt["input"], opt["output"])
        from .system import _apply_simple_override

        def builder(**kw):
            d = json.loads(json.dumps(manifest["resolved_parameters"]))
            _apply_simple_override(d, param, kw[param])
            return config_from_dict(d)

        res = analysis.sweep(builder, {param: values}, [channel])
        rows = []
        for pt in res.points:
            if pt.error:
                rows.append((pt.params[param], "", "", "", pt.error))
            else:
                f_pk, m_pk = pt.peaks[channel]
                rows.append((pt.params[param], pt.stable, f_pk, m_pk, ""))
        _write_csv(out / "sweep.csv",
                   [param, "stable", "f_peak_hz", "mag_peak_db", "error"],
                   rows)
        manifest["outputs"].append("sweep.csv")

    elif cfg.command == "spectrum":
        model = build(sysconf)
        T = float(opt.get("t_end_s", 40.0))
        dt = float(opt.get("dt_s", 1e-3))
        ts = step_response(model.ss, opt["input"], T, dt)
        spec = fft_magnitude(ts, opt["channel"])
        _write_csv(out / "spectrum.csv", ["f_hz", "magnitude"],
                   zip(spec.freq_hz, spec.magnitude))
        manifest["outputs"].append("spectrum.csv")

    elif cfg.command == "check":
        verdict = check_assumption1(sysconf.graph)
        model = build(sysconf, check_network=False)
        stab = analysis.stability(model)
        rows = [("assumption1", verdict.verdict),
                ("stable", "true" if stab.stable else "false")]
        bounds = sysconf.metadata.get("ratio_bounds")
        if bounds:
            names = sorted(sysconf.ctrl)
            if len(names) == 2:
                res = analysis.check_ratio_bounds_async(
                    sysconf.ctrl[names[0]].k_p, sysconf.ctrl[names[0]].k_d,
                    sysconf.ctrl[names[1]].k_p, sysconf.ctrl[names[1]].k_d,
                    bounds=(bounds[names[0]], bounds[names[1]]))
                rows += [(f"ratio_bound_{names[0]}",
                          "pass" if res["vsc1"] else "fail"),
                         (f"ratio_bound_{names[1]}",
                          "pass" if res["vsc2"] else "fail")]
        _write_csv(out / "check.csv", ["check", "result"], rows)
        manifest["outputs"].append("check.csv")
        manifest["assumption1"] = verdict.verdict
        manifest["stable"] = stab.stable
        try:
            gains = dc_gain(model.ss)
            manifest["dc_gain_available"] = True
        except NoDcGain:
            manifest["dc_gain_available"] = False


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="acdcdyn",
        description="Small-signal analysis of hybrid AC/DC networks under "
                    "dual-port grid-forming control.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True,
                        help="JSON run configuration")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override a config entry (dotted path; prefix "
                             "'options.' to target command options)")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        cfg = _apply_sets(cfg, args.set)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return run(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
