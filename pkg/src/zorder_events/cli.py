"""Command line entry point: ``zorder-events <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path

from . import bench, synth
from .detect import DETECTORS, DetectorDisagreement, detect_all, write_events_csv
from .masks import BUILTIN_MASKS, MaskParseError, builtin_mask, parse_mask
from .morton import QuantizationConfig
from .store import Store, StoreError, ingest

log = logging.getLogger("zorder_events")

EXIT_DISAGREEMENT = 3


@contextmanager
def _output(path: str | None):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _maneuver(kind: str):
    def parse(text: str) -> synth.Maneuver:
        try:
            t, mag = text.split(":")
            return synth.Maneuver(kind, int(t), float(mag))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected T_MS:MAGNITUDE, got {text!r}") from None

    return parse


def _count(text: str) -> int:
    value = float(text)
    if value != int(value) or value < 0:
        raise argparse.ArgumentTypeError(f"not a non-negative integer: {text!r}")
    return int(value)


def _int_list(text: str) -> list[int]:
    return [_count(part) for part in text.split(",") if part]


def _bounds(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None


def cmd_generate(args) -> int:
    explicit = tuple(args.braking + args.lane_change)
    if explicit:
        spec = synth.ScenarioSpec(
            duration_s=args.duration_s,
            sample_rate_hz=args.rate,
            rng_seed=args.seed,
            maneuvers=explicit,
            noise=args.noise,
        )
    else:
        spec = synth.random_scenario(
            args.duration_s, args.seed, args.auto_braking, args.auto_lane_change,
            noise=args.noise, sample_rate_hz=args.rate,
        )
    t, v, annotations = synth.generate_arrays(spec)
    with _output(args.out) as fh:
        synth.write_samples_csv(fh, t, v)
    if args.annotations:
        with _output(args.annotations) as fh:
            synth.write_annotations_csv(fh, annotations)
    log.info("generated %d samples, %d maneuvers", len(t), len(annotations))
    return 0


def _sniff_dims(path: str) -> int:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                first = line.strip().split(",")
                try:
                    int(first[0])
                except ValueError:
                    continue
                return len(first) - 1
    raise StoreError(f"{path}: no data rows to infer the dimension count from")


def cmd_ingest(args) -> int:
    if args.csv == "-":
        if args.dims is None:
            raise StoreError("--dims is required when reading from stdin")
        dims = args.dims
    else:
        dims = args.dims or _sniff_dims(args.csv)
    bounds = args.bounds or [synth.DEFAULT_BOUNDS]
    if len(bounds) == 1:
        bounds = bounds * dims
    if len(bounds) != dims:
        raise StoreError(f"got {len(bounds)} --bounds for {dims} dimensions")
    config = QuantizationConfig(
        tuple(b[0] for b in bounds), tuple(b[1] for b in bounds), (args.bits,) * dims
    )
    t0 = time.perf_counter()
    if args.csv == "-":
        store = ingest(sys.stdin, config, args.store)
    else:
        with open(args.csv, encoding="utf-8", newline="") as fh:
            store = ingest(fh, config, args.store)
    print(f"ingested {len(store)} samples into {store.path} in {time.perf_counter() - t0:.2f} s")
    return 0


def _load_mask(ref: str):
    if ref in BUILTIN_MASKS:
        return builtin_mask(ref)
    return parse_mask(Path(ref).read_text(encoding="utf-8"))


def cmd_query(args) -> int:
    store = Store.open(args.store)
    mask = _load_mask(args.mask)
    names = list(DETECTORS) if args.detector == "all" else [args.detector]
    results = detect_all(store, mask, names)
    with _output(args.out) as fh:
        write_events_csv(
            fh, ((e, mask.name, name) for name in names for e in results[name])
        )
    return 0


def cmd_spectrum(args) -> int:
    store = Store.open(args.store)
    with _output(args.out) as fh:
        store.write_spectrum_csv(fh, args.bucket_ms)
    return 0


def cmd_audit(args) -> int:
    store = Store.open(args.store)
    report = store.audit(checksums=not args.skip_checksums)
    print(f"entries {report.entry_count}, index entries {report.index_count}")
    for problem in report.problems:
        print(f"FAIL {problem}")
    print("OK" if report.ok else "AUDIT FAILED")
    return 0 if report.ok else 1


def cmd_bench(args) -> int:
    sizes = sorted(args.sizes)
    workdir = Path(args.workdir)
    t0 = time.perf_counter()
    spec = synth.braking_bursts_scenario(sizes[-1], args.seed, burst_every_s=args.burst_every_s)
    stores = synth.scale_corpus(spec, sizes, workdir / "stores")
    print(f"built {len(stores)} stores in {time.perf_counter() - t0:.1f} s (ingest, one time)")
    masks = bench.select_masks(stores[-1], args.stages, args.masks_per_stage, seed=args.seed)
    results = bench.run_matrix(
        stores, masks, repetitions=args.repetitions, parallel=args.parallel
    )
    if args.results:
        with _output(args.results) as fh:
            bench.write_results_csv(fh, results)
    print(bench.report(results), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zorder-events", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic annotated recording as CSV")
    p.add_argument("--duration-s", type=float, default=1800.0)
    p.add_argument("--rate", type=int, default=100, help="sample rate, Hz")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.2, help="background noise bound, m/s^2")
    p.add_argument("--braking", type=_maneuver(synth.BRAKING), action="append", default=[],
                   metavar="T_MS:MAG")
    p.add_argument("--lane-change", type=_maneuver(synth.LANE_CHANGE), action="append",
                   default=[], metavar="T_MS:MAG")
    p.add_argument("--auto-braking", type=int, default=10,
                   help="random brakings when none are given explicitly")
    p.add_argument("--auto-lane-change", type=int, default=10)
    p.add_argument("--out", "-o", default="-")
    p.add_argument("--annotations", help="annotations CSV path")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest", help="build a store and its Morton index from CSV")
    p.add_argument("csv", help="input CSV path, or - for stdin")
    p.add_argument("--store", required=True)
    p.add_argument("--bounds", type=_bounds, action="append",
                   help="LO:HI per dimension (one value applies to all); default -16:8")
    p.add_argument("--bits", type=int, default=synth.DEFAULT_BITS, help="bits per dimension")
    p.add_argument("--dims", type=int)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("query", help="detect events matching a search mask")
    p.add_argument("--store", required=True)
    p.add_argument("--mask", required=True,
                   help=f"mask file or built-in name ({', '.join(BUILTIN_MASKS)})")
    p.add_argument("--detector", default="sfc", choices=[*DETECTORS, "all"])
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("spectrum", help="export (time bucket, code) pairs for plotting")
    p.add_argument("--store", required=True)
    p.add_argument("--bucket-ms", type=int, default=10)
    p.add_argument("--out", "-o", default="-")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("bench", help="time all detectors over a ladder of store sizes")
    p.add_argument("--sizes", type=_int_list, default=[100_000, 1_000_000, 10_000_000, 30_000_000])
    p.add_argument("--stages", type=_int_list, default=[1, 2, 3])
    p.add_argument("--masks-per-stage", type=int, default=5)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--burst-every-s", type=float, default=21600.0,
                   help="one burst of 1-3 brakings per this many seconds of drive")
    p.add_argument("--workdir", default="bench-work")
    p.add_argument("--results", help="per-cell results CSV path")
    p.add_argument("--parallel", action="store_true",
                   help="run cells concurrently (timings become unreliable)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("audit", help="verify index completeness against the primary log")
    p.add_argument("--store", required=True)
    p.add_argument("--skip-checksums", action="store_true")
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except DetectorDisagreement as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DISAGREEMENT
    except (StoreError, MaskParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
