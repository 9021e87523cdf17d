import logging
import os
import threading
import time
from pathlib import Path
from typing import IO, List, Optional, Sequence, Tuple

import click
import keke
from vmodule import vmodule_init

from .bench import AttnShape, cost_trajectory, cost_vanilla, measure_similarity_macs, report_csv
from .cache import NoCache, WeightCache
from .config import PipelineConfig
from .frames import read_sequence, synth_sequence, SYNTH_KINDS, write_sequence, digest
from .metrics import psnr, ssim, write_metrics_csv
from .motion import block_match_flow, Flow, pool_flow, read_flo, write_flo
from .pipeline import run_sequence
from .trajectory import format_trajectory, max_gap, new_stack, oracle_track, trajectory_of, update_stack
from .types import BoundsError, FeatureMap, FormatError, PreconditionError, SizingError, WeightLoadError
from .weights import load_weights

LOG = logging.getLogger(__name__)

FLOW_NAME = "flow_{:05d}.flo"
REVERSE_FLOW_NAME = "rflow_{:05d}.flo"


class InputError(click.ClickException):
    exit_code = 2


class DataFormatError(click.ClickException):
    exit_code = 3


def _stats_thread() -> None:
    prev_ts = None
    prev_process_time = None
    while True:
        ts = time.time()
        process_time = time.process_time()
        if prev_ts is not None:
            keke.kcount(
                "proc_cpu_pct",
                100 * (process_time - prev_process_time) / (ts - prev_ts),
            )

        prev_ts = ts
        prev_process_time = process_time
        time.sleep(0.1)


def _ints(value: str, sep: str, count: int, what: str) -> Tuple[int, ...]:
    try:
        parts = tuple(int(p) for p in value.split(sep))
    except ValueError:
        raise InputError(f"Invalid {what}: {value!r}") from None
    if len(parts) != count:
        raise InputError(f"Invalid {what}: {value!r}")
    return parts


def _threads(threads: int) -> int:
    return threads if threads > 0 else (os.cpu_count() or 1)


def _read_frames(in_dir: Path) -> List[FeatureMap]:
    try:
        return read_sequence(in_dir)
    except OSError as e:
        raise InputError(str(e))


def _read_flows(flow_dir: Optional[Path], name: str, count: int) -> Optional[List[Optional[Flow]]]:
    if flow_dir is None:
        return None
    out: List[Optional[Flow]] = []
    for i in range(1, count + 1):
        p = flow_dir / name.format(i)
        if not p.exists():
            LOG.info("No %s, block matching instead", p)
            out.append(None)
            continue
        try:
            out.append(read_flo(p))
        except FormatError as e:
            raise DataFormatError(f"{p}: {e}")
    return out


threads_option = click.option(
    "--threads",
    type=int,
    default=1,
    show_default=True,
    envvar="TTVSR_THREADS",
    help="Worker threads for block matching (0 = one per cpu)",
)


@click.group()
@click.pass_context
@click.option(
    "--trace", type=click.File("w"), help="Write chrome trace to this filename"
)
@click.option("--stats", is_flag=True, help="Include cpu stats in the trace")
@click.option(
    "--verbose",
    "-v",
    type=int,
    help="Enable verbose logging (default=WARNING, 0=INFO, 1=VLOG_1, 10=DEBUG)",
)
@click.option(
    "--vmodule",
    help="Enable verbose logging only for some explicitly named loggers (e.g. "
    "'ttvsr.pipeline=1' would enable VLOG_1 for just that one logger.  Comma-separated.",
)
def main(
    ctx: click.Context,
    trace: Optional[IO[str]],
    stats: bool,
    verbose: Optional[int],
    vmodule: Optional[str],
) -> None:
    if trace:
        ctx.with_resource(keke.TraceOutput(trace))
    vmodule_init(verbose, vmodule)
    if stats:
        threading.Thread(target=_stats_thread, daemon=True).start()


@main.command()
@click.argument("kind", type=click.Choice(SYNTH_KINDS))
@click.argument("frames", type=int)
@click.argument("out_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--size", default="16x16", show_default=True, help="HxW")
@click.option("--seed", default=0, show_default=True, type=int)
def synth(kind: str, frames: int, out_dir: Path, size: str, seed: int) -> None:
    """Write a synthetic PNG sequence."""
    h, w = _ints(size, "x", 2, "size")
    try:
        seq = synth_sequence(kind, frames, (h, w), seed)  # type: ignore[arg-type]
    except (PreconditionError, SizingError) as e:
        raise InputError(str(e))
    try:
        write_sequence(seq, out_dir)
    except OSError as e:
        raise InputError(f"Cannot write {out_dir}: {e}")
    click.echo(f"Wrote {len(seq)} {kind} frame(s) of {h}x{w} to {out_dir}")


@main.command()
@click.argument("in_dir", type=click.Path(file_okay=False, path_type=Path))
@click.argument("out_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--patch", default=3, show_default=True)
@click.option("--radius", default=2, show_default=True)
@click.option("--bidirectional", is_flag=True, help="Also write reverse flows")
@threads_option
def flow(in_dir: Path, out_dir: Path, patch: int, radius: int, bidirectional: bool, threads: int) -> None:
    """Block-match backward flows between consecutive frames."""
    frames = _read_frames(in_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(1, len(frames)):
        with keke.kev("flow", index=i):
            f = block_match_flow(frames[i], frames[i - 1], patch, radius, _threads(threads))
            write_flo(f, out_dir / FLOW_NAME.format(i))
            if bidirectional:
                r = block_match_flow(frames[i - 1], frames[i], patch, radius, _threads(threads))
                write_flo(r, out_dir / REVERSE_FLOW_NAME.format(i))
    click.echo(f"Wrote {len(frames) - 1} flow(s) to {out_dir}")


@main.command()
@click.argument("in_dir", type=click.Path(file_okay=False, path_type=Path))
@click.argument("out_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--weights", type=click.Path(dir_okay=False, path_type=Path), help="TTWB weight file; seeded weights otherwise")
@click.option("--bidirectional", is_flag=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--interval", default=3, show_default=True, help="Coarse memory sampling interval")
@click.option("--fine-window", default=2, show_default=True)
@click.option("--channels", default=64, show_default=True)
@click.option("--extract-blocks", default=5, show_default=True)
@click.option("--recon-blocks", default=60, show_default=True)
@click.option("--ring-limit", type=int, help="Keep at most this many location maps")
@click.option("--flows", "flow_dir", type=click.Path(file_okay=False, path_type=Path), help="Directory of flow_NNNNN.flo files")
@click.option("--gt", "gt_dir", type=click.Path(file_okay=False, path_type=Path), help="Ground truth frames; writes metrics.csv")
@click.option("--golden-hash", is_flag=True, help="Print a digest of the outputs")
@click.option("--no-cache", is_flag=True, help="Do not read or write cached seeded weights")
@threads_option
def sr(
    in_dir: Path,
    out_dir: Path,
    weights: Optional[Path],
    bidirectional: bool,
    seed: int,
    interval: int,
    fine_window: int,
    channels: int,
    extract_blocks: int,
    recon_blocks: int,
    ring_limit: Optional[int],
    flow_dir: Optional[Path],
    gt_dir: Optional[Path],
    golden_hash: bool,
    no_cache: bool,
    threads: int,
) -> None:
    """Super-resolve a PNG sequence 4x."""
    try:
        cfg = PipelineConfig(
            channels=channels,
            extract_blocks=extract_blocks,
            recon_blocks=recon_blocks,
            coarse_interval=interval,
            fine_window=fine_window,
            bidirectional=bidirectional,
            seed=seed,
            map_ring_limit=ring_limit,
            parallelism=_threads(threads),
        )
    except ValueError as e:
        raise InputError(str(e))
    frames = _read_frames(in_dir)

    if weights is not None:
        try:
            ws = load_weights(weights, cfg)
        except OSError as e:
            raise InputError(str(e))
        except WeightLoadError as e:
            raise DataFormatError(f"{weights}: {e}")
    else:
        cache = NoCache() if no_cache else WeightCache()
        ws = cache.seeded(cfg, seed)

    n = len(frames) - 1
    try:
        outputs = run_sequence(
            frames,
            ws,
            cfg,
            flows=_read_flows(flow_dir, FLOW_NAME, n),
            backward_flows=_read_flows(flow_dir, REVERSE_FLOW_NAME, n) if bidirectional else None,
        )
    except SizingError as e:
        raise InputError(str(e))
    write_sequence(outputs, out_dir)

    if gt_dir is not None:
        gt = _read_frames(gt_dir)
        if len(gt) != len(outputs):
            raise InputError(f"{len(gt)} ground truth frames for {len(outputs)} outputs")
        try:
            rows = [(i, psnr(o, g), ssim(o, g)) for i, (o, g) in enumerate(zip(outputs, gt))]
        except SizingError as e:
            raise InputError(f"ground truth: {e}")
        write_metrics_csv(rows, out_dir / "metrics.csv")

    click.echo(f"Wrote {len(outputs)} frame(s) to {out_dir}")
    if golden_hash:
        click.echo(digest(outputs))


@main.command()
@click.argument("in_dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--cell", required=True, help="m,n on the (pooled) grid of the last frame")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Write both trajectories here")
@click.option("--pool", default=1, show_default=True, help="Track on a grid pooled by this factor")
@click.option("--patch", default=3, show_default=True)
@click.option("--radius", default=2, show_default=True)
@threads_option
def traj(in_dir: Path, cell: str, out: Optional[Path], pool: int, patch: int, radius: int, threads: int) -> None:
    """Compare a location-map trajectory with per-point flow chaining."""
    m, n = _ints(cell, ",", 2, "cell")
    frames = _read_frames(in_dir)
    try:
        flows = [
            pool_flow(block_match_flow(frames[i], frames[i - 1], patch, radius, _threads(threads)), pool)
            for i in range(1, len(frames))
        ]
        h, w = frames[0].height // pool, frames[0].width // pool
        stack = new_stack(h, w)
        for f in flows:
            stack = update_stack(stack, f)
        tracked = trajectory_of(stack, m, n)
    except (BoundsError, SizingError) as e:
        raise InputError(str(e))
    oracle = oracle_track(flows[::-1], m, n)
    gap = max_gap(tracked, oracle)

    if out is not None:
        out.write_text(
            "# location map\n"
            + format_trajectory(tracked)
            + "# oracle\n"
            + format_trajectory(oracle)
            + f"# max_gap {gap:.6f}\n"
        )
    click.echo(f"max gap: {gap:.6f}")


def _parse_shapes(shapes: Sequence[str]) -> List[AttnShape]:
    out = []
    for s in shapes:
        try:
            out.append(AttnShape(*_ints(s, ",", 6, "shape")))
        except SizingError as e:
            raise InputError(f"Invalid shape {s!r}: {e}")
    return out


@main.command()
@click.option(
    "--shape",
    "shapes",
    multiple=True,
    default=["10,4,16,16,4,4"],
    show_default=True,
    help="T,C,H,W,Dh,Dw; repeatable",
)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Write the CSV here instead of stdout")
@click.option("--measure", is_flag=True, help="Check the closed forms against instrumented runs")
def bench(shapes: Sequence[str], out: Optional[Path], measure: bool) -> None:
    """Similarity MACs of vanilla vs trajectory attention."""
    parsed = _parse_shapes(shapes)
    if measure:
        for s in parsed:
            for mode, expected in (("trajectory", cost_trajectory(s)), ("vanilla", cost_vanilla(s))):
                got = measure_similarity_macs(s, mode)  # type: ignore[arg-type]
                if got != expected:
                    raise click.ClickException(f"{mode} {s}: measured {got}, expected {expected}")
    text = report_csv(parsed)
    if out is not None:
        out.write_text(text)
    else:
        click.echo(text, nl=False)


if __name__ == "__main__":
    main()
