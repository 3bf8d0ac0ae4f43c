"""Meta-job generation, workload sizing, and local execution of one meta-job."""

from __future__ import annotations

import itertools
import math
import tarfile
from dataclasses import dataclass
from pathlib import Path

from .megdata import Recording, SAMPLE_DTYPE
from .wavelet import DEFAULT_WINDOW_LEN, WaveletConfig, analyze_pair, emit_asc, emit_ppm, output_stem

# 102 days of serial work spread over 7,257,600 fine jobs on the reference machine.
REFERENCE_FINE_JOB_SECONDS = 1.214


@dataclass(frozen=True)
class WorkloadSpec:
    sensor_count: int
    offset_max: int
    meta_job_size: int
    window_len: int = DEFAULT_WINDOW_LEN
    per_fine_job_cpu_sec: float = REFERENCE_FINE_JOB_SECONDS

    def __post_init__(self):
        if self.sensor_count < 2:
            raise ValueError("pairwise analysis needs at least two sensors")
        if self.meta_job_size < 1:
            raise ValueError("meta_job_size must be at least 1")
        if self.meta_job_size > self.offset_max:
            raise ValueError("meta_job_size cannot exceed offset_max")
        if self.per_fine_job_cpu_sec <= 0:
            raise ValueError("per_fine_job_cpu_sec must be positive")


@dataclass(frozen=True)
class MetaJob:
    id: int
    offset_start: int
    offset_count: int
    sensor_count: int
    work_units: float  # CPU-seconds on the speed-1.0 reference machine
    input_bytes: int

    @property
    def offsets(self) -> range:
        return range(self.offset_start, self.offset_start + self.offset_count)

    @property
    def jobname(self) -> str:
        return f"j{self.id}"


@dataclass(frozen=True)
class MetaJobOutput:
    archive: Path
    files: tuple[str, ...]


def pair_count(sensor_count: int) -> int:
    return math.comb(sensor_count, 2)


def fine_job_count(sensor_count: int, offset_max: int) -> int:
    """One fine job per unordered sensor pair per offset sample."""
    if sensor_count < 2:
        raise ValueError("need at least two sensors")
    return pair_count(sensor_count) * offset_max


def estimate_workload(sensor_count: int, duration_seconds: int) -> int:
    """One fine job per unordered sensor pair per second of recording."""
    if sensor_count < 2:
        raise ValueError("need at least two sensors")
    return pair_count(sensor_count) * duration_seconds


def serial_seconds(jobs: int, per_job_seconds: float = REFERENCE_FINE_JOB_SECONDS) -> float:
    return jobs * per_job_seconds


def generate_meta_jobs(spec: WorkloadSpec) -> list[MetaJob]:
    """Split offsets ``[0, offset_max)`` into consecutive chunks of ``meta_job_size``.

    The last chunk is short when the size does not divide the range.
    """
    pairs = pair_count(spec.sensor_count)
    jobs = []
    for i, start in enumerate(range(0, spec.offset_max, spec.meta_job_size), start=1):
        count = min(spec.meta_job_size, spec.offset_max - start)
        span = count + spec.window_len - 1
        jobs.append(MetaJob(
            id=i,
            offset_start=start,
            offset_count=count,
            sensor_count=spec.sensor_count,
            work_units=count * pairs * spec.per_fine_job_cpu_sec,
            input_bytes=spec.sensor_count * span * SAMPLE_DTYPE.itemsize,
        ))
    return jobs


def execute_meta_job(job: MetaJob, recording: Recording, cfg: WaveletConfig, out_dir,
                     window_len: int = DEFAULT_WINDOW_LEN) -> MetaJobOutput:
    """Analyse every unordered pair at every offset of ``job`` and tar the results."""
    if recording is None:
        raise ValueError("missing recording")
    if recording.sensor_count != job.sensor_count:
        raise ValueError(
            f"job expects {job.sensor_count} sensors, recording has {recording.sensor_count}")
    out_dir = Path(out_dir)
    work = out_dir / job.jobname
    work.mkdir(parents=True, exist_ok=True)
    names = []
    for offset in job.offsets:
        for a, b in itertools.combinations(range(job.sensor_count), 2):
            cmap = analyze_pair(recording, a, b, offset, window_len, cfg)
            stem = output_stem(a, b, offset)
            emit_asc(cmap, work / f"{stem}.asc")
            emit_ppm(cmap, work / f"{stem}.ppm")
            names += [f"{stem}.asc", f"{stem}.ppm"]
    archive = out_dir / f"output.tar.{job.jobname}"
    with tarfile.open(archive, "w", format=tarfile.USTAR_FORMAT) as tar:
        for name in names:
            info = tar.gettarinfo(work / name, arcname=name)
            info.mtime = 0
            info.uid = info.gid = 0
            info.uname = info.gname = ""
            with open(work / name, "rb") as fh:
                tar.addfile(info, fh)
    return MetaJobOutput(archive, tuple(names))


def ordered_pair_maps(job: MetaJob, recording: Recording, cfg: WaveletConfig,
                      window_len: int = DEFAULT_WINDOW_LEN) -> dict:
    """The original nested loop over ordered pairs (A != B), kept for equivalence checks."""
    out = {}
    for offset in job.offsets:
        for a in range(job.sensor_count):
            for b in range(job.sensor_count):
                if a != b:
                    out[(a, b, offset)] = analyze_pair(recording, a, b, offset, window_len, cfg)
    return out
