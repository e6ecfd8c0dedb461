"""Command-line client for the transcription service.

Every subcommand posts to the HTTP API.  By default the service runs
in-process (requests travel through an ASGI transport, no socket involved);
pass ``--server URL`` to talk to a remote instance instead.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

from .core import (
    FormatError,
    PerformanceNote,
    Transcription,
    TranscribedNote,
    read_performance_tsv,
    read_score_tsv,
    read_transcription_tsv,
    write_performance_tsv,
    write_transcription_tsv,
)
from .midi import read_smf

__all__ = ["main"]

_MIDI_SUFFIXES = {".mid", ".midi", ".smf"}


class CliError(RuntimeError):
    pass


class ServiceClient:
    """POSTs JSON bodies either in-process or to a remote server."""

    def __init__(self, server: str | None):
        self.server = server

    def post(self, path: str, payload: dict) -> dict:
        if self.server is not None:
            with httpx.Client(base_url=self.server, timeout=600.0) as client:
                response = client.post(path, json=payload)
        else:
            response = asyncio.run(self._post_in_process(path, payload))
        if response.status_code != 200:
            try:
                detail = response.json().get("detail", response.text)
            except (json.JSONDecodeError, ValueError):
                detail = response.text
            raise CliError(f"service error ({response.status_code}): {detail}")
        return response.json()

    async def _post_in_process(self, path: str, payload: dict) -> httpx.Response:
        from .service import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://polyscribe.internal", timeout=None
        ) as client:
            return await client.post(path, json=payload)


def _read_performance(path: Path) -> list[PerformanceNote]:
    if path.suffix.lower() in _MIDI_SUFFIXES:
        return read_smf(path)
    return read_performance_tsv(path.read_text(encoding="utf-8"))


def _performance_payload(notes) -> list[dict]:
    return [
        {"onset_sec": n.onset_sec, "pitch": n.pitch, "offset_sec": n.offset_sec}
        for n in notes
    ]


def _score_payload(notes) -> list[dict]:
    return [
        {
            "voice": n.voice,
            "onset_tick": n.onset_tick,
            "pitch": n.pitch,
            "value_tick": n.value_tick,
        }
        for n in notes
    ]


def _transcribed_payload(notes) -> list[dict]:
    return [
        {
            "onset_sec": n.onset_sec,
            "pitch": n.pitch,
            "voice": n.voice,
            "note_value": n.note_value,
            "cluster_flag": n.cluster_flag,
            "score_time": n.score_time,
            "tempo": n.tempo,
        }
        for n in notes
    ]


def _transcription_from_payload(body: dict) -> Transcription:
    notes = [
        TranscribedNote(
            onset_sec=row["onset_sec"],
            pitch=row["pitch"],
            voice=row["voice"],
            note_value=row["note_value"],
            cluster_flag=row["cluster_flag"],
            score_time=row["score_time"],
            tempo=row["tempo"],
        )
        for row in body["notes"]
    ]
    return Transcription(
        notes=notes,
        log_prob=body["log_prob"],
        model=body.get("model", ""),
        info=body.get("info", {}),
    )


def _write_or_print(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _tempo_payload(args) -> dict:
    return {"v_min": args.tempo_min, "v_max": args.tempo_max, "n": args.tempo_steps}


def _add_common_decode_args(p: argparse.ArgumentParser):
    p.add_argument("-p", "--params", help="merged-model parameter TOML")
    p.add_argument("--metrical-params", help="metrical parameter TOML")
    p.add_argument("--nh", type=int, default=30, help="history cap per voice")
    p.add_argument("--beam", type=int, default=None, help="beam width (default exact)")
    p.add_argument("--tempo-min", type=float, default=0.3)
    p.add_argument("--tempo-max", type=float, default=1.5)
    p.add_argument("--tempo-steps", type=int, default=50)


def _read_toml_arg(path: str | None) -> str | None:
    if path is None:
        return None
    return Path(path).read_text(encoding="utf-8")


def _cmd_train(args, client: ServiceClient) -> int:
    corpus_dir = Path(args.corpus_dir)
    files = sorted(corpus_dir.glob("*.tsv"))
    if not files:
        raise CliError(f"no .tsv score files in {corpus_dir}")
    pieces = [
        _score_payload(read_score_tsv(f.read_text(encoding="utf-8"))) for f in files
    ]
    payload = {
        "pieces": pieces,
        "kind": args.kind,
        "smoothing": args.smoothing,
        "span_threshold": args.span_threshold,
        "bar_ticks": args.bar_ticks,
    }
    if args.grid is not None:
        payload["grid_values"] = [int(v) for v in args.grid.split(",")]
    body = client.post("/train", payload)
    _write_or_print(body["params_toml"], args.output)
    return 0


def _cmd_transcribe(args, client: ServiceClient) -> int:
    notes = _read_performance(Path(args.performance))
    payload = {
        "notes": _performance_payload(notes),
        "model": args.model,
        "params_toml": _read_toml_arg(args.params),
        "metrical_params_toml": _read_toml_arg(args.metrical_params),
        "n_h": args.nh,
        "beam_width": args.beam,
        "tempo": _tempo_payload(args),
    }
    body = client.post("/transcribe", payload)
    result = _transcription_from_payload(body)
    _write_or_print(write_transcription_tsv(result), args.output)
    return 0


def _cmd_sample(args, client: ServiceClient) -> int:
    payload = {
        "kind": args.kind,
        "seed": args.seed,
        "params_toml": _read_toml_arg(args.params),
        "n_notes": args.n_notes,
        "grid_tempo": args.grid_tempo,
        "tempo": _tempo_payload(args),
        "n_bars": args.bars,
        "sec_per_quarter": args.sec_per_quarter,
        "sigma_t": args.sigma_t,
        "lam": args.lam,
        "tempo_drift": args.drift,
    }
    body = client.post("/sample", payload)
    perf = [
        PerformanceNote(row["onset_sec"], row["pitch"], row.get("offset_sec"))
        for row in body["performance"]
    ]
    _write_or_print(write_performance_tsv(perf), args.output)
    if args.truth is not None:
        truth = _transcription_from_payload(
            {"notes": body["truth"], "log_prob": body["log_prob"] or float("nan")}
        )
        _write_or_print(write_transcription_tsv(truth), args.truth)
    return 0


def _cmd_evaluate(args, client: ServiceClient) -> int:
    truth = read_score_tsv(Path(args.truth).read_text(encoding="utf-8"))
    estimate = read_transcription_tsv(Path(args.estimate).read_text(encoding="utf-8"))
    payload = {
        "truth": _score_payload(truth),
        "estimate": _transcribed_payload(estimate.notes),
        "weights": {"scale": args.wsc, "shift": args.wsh},
    }
    body = client.post("/evaluate", payload)
    for key in (
        "n_notes",
        "voice_accuracy",
        "correction_cost",
        "n_scale",
        "n_shift",
        "correction_rate",
        "value_match_rate",
    ):
        print(f"{key}\t{body[key]}")
    return 0


def _cmd_compare(args, client: ServiceClient) -> int:
    dataset = Path(args.dataset_dir)
    pieces = []
    for perf_path in sorted(dataset.glob("*.perf.tsv")):
        name = perf_path.name[: -len(".perf.tsv")]
        truth_path = dataset / f"{name}.score.tsv"
        if not truth_path.exists():
            raise CliError(f"missing truth file {truth_path}")
        pieces.append(
            {
                "name": name,
                "notes": _performance_payload(
                    read_performance_tsv(perf_path.read_text(encoding="utf-8"))
                ),
                "truth": _score_payload(
                    read_score_tsv(truth_path.read_text(encoding="utf-8"))
                ),
            }
        )
    if not pieces:
        raise CliError(f"no *.perf.tsv pieces in {dataset}")
    payload = {
        "pieces": pieces,
        "models": args.models.split(","),
        "params_toml": _read_toml_arg(args.params),
        "metrical_params_toml": _read_toml_arg(args.metrical_params),
        "n_h": args.nh,
        "beam_width": args.beam,
        "tempo": _tempo_payload(args),
        "weights": {"scale": args.wsc, "shift": args.wsh},
    }
    body = client.post("/compare", payload)
    print("model\tn_pieces\tmean_rate\tsem_rate\tmean_diff_vs_merged\tsem_diff")
    for agg in body["aggregates"]:
        diff = agg["mean_diff_vs_merged"]
        sem_d = agg["sem_diff_vs_merged"]
        print(
            f"{agg['model']}\t{agg['n_pieces']}\t{agg['mean_rate']:.6f}\t"
            f"{agg['sem_rate']:.6f}\t"
            f"{'' if diff is None else format(diff, '.6f')}\t"
            f"{'' if sem_d is None else format(sem_d, '.6f')}"
        )
    if args.per_piece:
        print()
        print("piece\tmodel\trate\tvoice_accuracy\tlog_prob")
        for piece in body["pieces"]:
            for model, rate in piece["rates"].items():
                print(
                    f"{piece['name']}\t{model}\t{rate:.6f}\t"
                    f"{piece['voice_accuracy'][model]:.6f}\t"
                    f"{piece['log_probs'][model]:.6f}"
                )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polyscribe",
        description="Two-voice rhythm transcription of MIDI performances.",
    )
    parser.add_argument("--server", help="remote service URL (default: in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="estimate model parameters from score TSVs")
    p.add_argument("corpus_dir")
    p.add_argument("-o", "--output", default="-", help="output TOML path (default stdout)")
    p.add_argument("--kind", choices=["merged", "metrical"], default="merged")
    p.add_argument("--smoothing", type=float, default=0.1)
    p.add_argument("--span-threshold", type=int, default=15)
    p.add_argument("--bar-ticks", type=int, default=192)
    p.add_argument("--grid", help="comma-separated note values in ticks")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("transcribe", help="transcribe a performance (.tsv or .mid)")
    p.add_argument("performance")
    p.add_argument(
        "--model", choices=["merged", "cascade", "note", "metrical"], default="merged"
    )
    p.add_argument("-o", "--output", default="-", help="output TSV path (default stdout)")
    _add_common_decode_args(p)
    p.set_defaults(func=_cmd_transcribe)

    p = sub.add_parser("sample", help="draw a performance with known truth")
    p.add_argument("--kind", choices=["model", "3v2", "4v3"], default="model")
    p.add_argument("-n", "--n-notes", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-p", "--params", help="merged-model parameter TOML")
    p.add_argument("--grid-tempo", action="store_true", help="sample tempo on the decoder grid")
    p.add_argument("--tempo-min", type=float, default=0.3)
    p.add_argument("--tempo-max", type=float, default=1.5)
    p.add_argument("--tempo-steps", type=int, default=50)
    p.add_argument("--bars", type=int, default=8)
    p.add_argument("--sec-per-quarter", type=float, default=0.5)
    p.add_argument("--sigma-t", type=float, default=0.02, help="onset noise (s)")
    p.add_argument("--lam", type=float, default=0.0101, help="chord asynchrony scale (s)")
    p.add_argument("--drift", type=float, default=0.0332, help="log-tempo drift per event")
    p.add_argument("-o", "--output", default="-", help="performance TSV (default stdout)")
    p.add_argument("--truth", help="also write the true transcription TSV here")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("evaluate", help="score an estimate against the truth")
    p.add_argument("truth", help="truth score TSV (row-aligned with the estimate)")
    p.add_argument("estimate", help="estimated transcription TSV")
    p.add_argument("--wsc", type=float, default=1.0, help="weight of a scale operation")
    p.add_argument("--wsh", type=float, default=1.0, help="weight of a shift operation")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("compare", help="run several models over a dataset directory")
    p.add_argument("dataset_dir", help="directory of <name>.perf.tsv / <name>.score.tsv pairs")
    p.add_argument("--models", default="merged,cascade,note,metrical")
    p.add_argument("--wsc", type=float, default=1.0)
    p.add_argument("--wsh", type=float, default=1.0)
    p.add_argument("--per-piece", action="store_true", help="also print per-piece rows")
    _add_common_decode_args(p)
    p.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    client = ServiceClient(args.server)
    try:
        return args.func(args, client)
    except (CliError, FormatError, OSError, ValueError, httpx.HTTPError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
