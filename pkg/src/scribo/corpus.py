"""Dataset ingestion, conversion, cleaning, statistics and splitting.

Datasets are flat lists of items (audio path, transcript, duration,
optional speaker). Readers for a few common layouts produce them,
cleaning filters them with six exclusion metrics, and the writer emits
the tab-separated manifest format used everywhere else in the package:

    duration<TAB>filepath<TAB>text[<TAB>speaker]

with duration in seconds (3 decimals) and filepath relative to the
manifest's directory. Remote downloading is deliberately absent; point
the readers at local files or archives.
"""
from __future__ import annotations

import logging
import math
import random
import shutil
import struct
import tarfile
import wave
import zipfile
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import ArchiveError, AudioFormatError, DatasetError

log = logging.getLogger(__name__)

TARGET_RATE = 16000

#: How non-conformant sample rates are brought to 16 kHz; recorded in
#: conversion sidecars so downstream users know the interpolation used.
RESAMPLE_METHOD = "polyphase windowed-sinc"


@dataclass(frozen=True)
class DatasetItem:
    filepath: str
    text: str
    duration: float
    speaker: str | None = None

    def __post_init__(self):
        if not self.filepath:
            raise ValueError("filepath must be non-empty")
        if not self.duration >= 0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")

    @property
    def chars_per_second(self) -> float:
        """len(text)/duration; undefined (inf) for zero duration."""
        return len(self.text) / self.duration if self.duration > 0 else math.inf


@dataclass(frozen=True)
class CorpusStats:
    item_count: int
    total_duration: float
    mean_chars_per_second: float
    mean_duration: float
    top_speakers: list[tuple[str, int]] = field(default_factory=list)


@dataclass(frozen=True)
class CleaningReport:
    kept: list[DatasetItem]
    excluded: list[tuple[DatasetItem, int]]

    def metric_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {m: 0 for m in range(1, 7)}
        for _, metric in self.excluded:
            counts[metric] += 1
        return counts


# ---------------------------------------------------------------------------
# Archives


def _safe_members(names, archive: str):
    for name in names:
        p = Path(name)
        if p.is_absolute() or ".." in p.parts:
            raise ArchiveError(f"{archive}: refusing unsafe member path {name!r}")


def extract_archive(path, dest_dir) -> Path:
    """Extract a .zip / .tar.gz / .tgz archive under dest_dir."""
    path = Path(path)
    dest = Path(dest_dir)
    dest.mkdir(parents=True, exist_ok=True)
    name = path.name.lower()
    try:
        if name.endswith(".zip"):
            with zipfile.ZipFile(path) as zf:
                _safe_members(zf.namelist(), str(path))
                zf.extractall(dest)
        elif name.endswith((".tar.gz", ".tgz", ".tar")):
            mode = "r:" if name.endswith(".tar") else "r:gz"
            with tarfile.open(path, mode) as tf:
                _safe_members(tf.getnames(), str(path))
                tf.extractall(dest)
        else:
            raise ArchiveError(f"{path}: unsupported archive format")
    except (zipfile.BadZipFile, tarfile.TarError, EOFError, OSError) as exc:
        raise ArchiveError(f"{path}: cannot extract: {exc}") from exc
    return dest


# ---------------------------------------------------------------------------
# Audio


def _to_float(samples: np.ndarray) -> np.ndarray:
    if samples.dtype == np.int16:
        return samples.astype(np.float64) / 32768.0
    if samples.dtype == np.int32:
        return samples.astype(np.float64) / 2147483648.0
    if samples.dtype == np.uint8:
        return (samples.astype(np.float64) - 128.0) / 128.0
    return samples.astype(np.float64)


def probe_duration(path) -> float:
    """Duration in seconds from the WAV header, without decoding."""
    try:
        with wave.open(str(path), "rb") as wf:
            rate = wf.getframerate()
            if rate <= 0:
                raise AudioFormatError(f"{path}: bad sample rate in header")
            return wf.getnframes() / rate
    except (wave.Error, EOFError, OSError, struct.error) as exc:
        raise AudioFormatError(f"{path}: cannot probe duration: {exc}") from exc


def _write_pcm16(path, samples: np.ndarray) -> None:
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(TARGET_RATE)
        wf.writeframes(samples.astype("<i2").tobytes())


def convert_audio(src_path, dst_path) -> float:
    """Convert any readable WAV to PCM-16 mono 16 kHz; return duration.

    Stereo is downmixed by averaging, other sample rates go through a
    polyphase windowed-sinc resampler, and already conformant input is
    passed through with byte-identical samples.
    """
    src_path, dst_path = Path(src_path), Path(dst_path)
    try:
        rate, data = wavfile.read(src_path)
    except (ValueError, EOFError, OSError, struct.error) as exc:
        raise AudioFormatError(f"{src_path}: cannot decode: {exc}") from exc

    if data.ndim == 2:
        mono = _to_float(data).mean(axis=1)
    elif data.dtype == np.int16 and rate == TARGET_RATE:
        # conformant input: copy samples through untouched
        _write_pcm16(dst_path, data)
        return len(data) / TARGET_RATE
    else:
        mono = _to_float(data)

    if len(mono) == 0:
        _write_pcm16(dst_path, np.zeros(0, dtype=np.int16))
        return 0.0
    if rate != TARGET_RATE:
        g = math.gcd(TARGET_RATE, int(rate))
        mono = resample_poly(mono, TARGET_RATE // g, rate // g)
    pcm = np.clip(np.rint(mono * 32768.0), -32768, 32767).astype(np.int16)
    _write_pcm16(dst_path, pcm)
    return len(pcm) / TARGET_RATE


# ---------------------------------------------------------------------------
# Readers

_FILE_COLS = ("path", "filepath", "filename", "file")
_TEXT_COLS = ("sentence", "text", "transcript")
_SPEAKER_COLS = ("client_id", "speaker")

READ_FORMATS = ("commonvoice-tsv", "folder-txt", "manifest-csv")


def _probe_or_zero(path: Path) -> float:
    try:
        return probe_duration(path)
    except AudioFormatError:
        return 0.0


def _read_commonvoice(tsv_path: Path) -> list[DatasetItem]:
    import csv

    with open(tsv_path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        header = reader.fieldnames or []
        file_col = next((c for c in _FILE_COLS if c in header), None)
        text_col = next((c for c in _TEXT_COLS if c in header), None)
        if file_col is None or text_col is None:
            raise DatasetError(f"{tsv_path}: header lacks a path or sentence column")
        speaker_col = next((c for c in _SPEAKER_COLS if c in header), None)
        has_duration = "duration" in header

        items, skipped = [], 0
        for row in reader:
            filepath = (row.get(file_col) or "").strip()
            text = (row.get(text_col) or "").strip()
            if not filepath or not text:
                skipped += 1
                continue
            if has_duration and (row.get("duration") or "").strip():
                duration = float(row["duration"])
            else:
                base = tsv_path.parent
                candidate = next(
                    (p for p in (base / filepath, base / "clips" / filepath) if p.exists()),
                    None,
                )
                duration = _probe_or_zero(candidate) if candidate else 0.0
            speaker = (row.get(speaker_col) or "").strip() or None if speaker_col else None
            items.append(DatasetItem(filepath, text, duration, speaker))
    if skipped:
        log.warning("%s: skipped %d rows with missing path/sentence", tsv_path, skipped)
    return items


def _read_folder_txt(folder: Path) -> list[DatasetItem]:
    items, skipped = [], 0
    for audio in sorted(folder.glob("*.wav")):
        transcript = audio.with_suffix(".txt")
        if not transcript.exists():
            skipped += 1
            continue
        text = transcript.read_text(encoding="utf-8").strip()
        items.append(DatasetItem(audio.name, text, _probe_or_zero(audio)))
    if skipped:
        log.warning("%s: %d wav files have no .txt transcript", folder, skipped)
    return items


def read_manifest(path) -> list[DatasetItem]:
    """Read the package's tab-separated manifest format."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(f"{path}: cannot read manifest: {exc}") from exc
    if not lines:
        raise DatasetError(f"{path}: empty manifest (missing header)")
    header = lines[0].split("\t")
    if header[:3] != ["duration", "filepath", "text"] or header[3:] not in ([], ["speaker"]):
        raise DatasetError(f"{path}: unexpected manifest header {lines[0]!r}")
    has_speaker = len(header) == 4

    items, skipped = [], 0
    for lineno, line in enumerate(lines[1:], 2):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != len(header):
            skipped += 1
            continue
        try:
            duration = float(fields[0])
            items.append(
                DatasetItem(fields[1], fields[2], duration,
                            fields[3] if has_speaker and fields[3] else None)
            )
        except ValueError:
            skipped += 1
    if skipped:
        log.warning("%s: skipped %d malformed manifest rows", path, skipped)
    return items


def read_dataset(format_tag: str, path) -> list[DatasetItem]:
    """Load a dataset in one of the supported layouts.

    ``commonvoice-tsv`` reads a TSV metadata file (path/sentence columns
    and friends), ``folder-txt`` pairs each ``x.wav`` with ``x.txt``,
    ``manifest-csv`` reads this package's own manifest. Durations
    missing from metadata are probed from the WAV headers.
    """
    path = Path(path)
    if format_tag not in READ_FORMATS:
        raise DatasetError(f"unknown dataset format {format_tag!r}; know {READ_FORMATS}")
    if not path.exists():
        raise DatasetError(f"{path}: no such file or directory")
    if format_tag == "commonvoice-tsv":
        return _read_commonvoice(path)
    if format_tag == "folder-txt":
        return _read_folder_txt(path)
    return read_manifest(path)


# ---------------------------------------------------------------------------
# Cleaning, statistics, splitting

MAX_TEXT_CHARS = 512
MIN_DURATION = 0.5
MAX_DURATION = 30.0


def corpus_averages(items) -> tuple[float, float]:
    """(mean chars/second over items with duration > 0, mean duration
    over all items); both 0.0 for an empty corpus."""
    cps = [it.chars_per_second for it in items if it.duration > 0]
    a_cps = sum(cps) / len(cps) if cps else 0.0
    a_dur = sum(it.duration for it in items) / len(items) if items else 0.0
    return a_cps, a_dur


def _first_firing_metric(item: DatasetItem, a_cps: float, a_dur: float) -> int | None:
    if item.duration < MIN_DURATION:
        return 1
    if item.duration > MAX_DURATION:
        return 2
    if len(item.text) > MAX_TEXT_CHARS:
        return 3
    cps = item.chars_per_second
    if cps > 2.0 * a_cps:
        return 4
    if cps < 1.0 / 3.0:
        return 5
    if cps < a_cps / 3.0 and item.duration > a_dur / 5.0:
        return 6
    return None


def clean_corpus(items) -> CleaningReport:
    """Apply the six exclusion metrics in one pass.

    With cps = len(text)/duration, A_cps / A_dur the corpus averages
    from corpus_averages (computed once, before any filtering):

      1. duration < 0.5 s
      2. duration > 30 s
      3. more than 512 characters of text
      4. cps more than twice A_cps
      5. cps below one character per three seconds
      6. cps below A_cps/3 while duration exceeds A_dur/5

    Items report the lowest-numbered metric that fired. Zero-duration
    items fall under metric 1, so cps is never evaluated for them.
    """
    a_cps, a_dur = corpus_averages(items)
    kept, excluded = [], []
    for item in items:
        metric = _first_firing_metric(item, a_cps, a_dur)
        if metric is None:
            kept.append(item)
        else:
            excluded.append((item, metric))
    return CleaningReport(kept, excluded)


def compute_stats(items) -> CorpusStats:
    """Corpus totals plus speaker counts, most recorded first."""
    items = list(items)
    total = sum(it.duration for it in items)
    timed = [it for it in items if it.duration > 0]
    mean_cps = sum(it.chars_per_second for it in timed) / len(timed) if timed else 0.0
    mean_dur = sum(it.duration for it in timed) / len(timed) if timed else 0.0
    counts = Counter(it.speaker for it in items if it.speaker is not None)
    top = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return CorpusStats(len(items), total, mean_cps, mean_dur, top)


def _partition_names(n: int, names=None) -> list[str]:
    if names is not None:
        if len(names) != n:
            raise ValueError("need one name per fraction")
        return list(names)
    if n == 1:
        return ["all"]
    if n == 2:
        return ["train", "test"]
    if n == 3:
        return ["train", "dev", "test"]
    return [f"part{i + 1}" for i in range(n)]


def _largest_remainder_counts(fractions, total: int) -> list[int]:
    exact = [f * total for f in fractions]
    base = [int(x) for x in exact]
    short = total - sum(base)
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return base


def split_dataset(items, fractions, seed: int = 0, by_key: str | None = None,
                  names=None) -> dict[str, list[DatasetItem]]:
    """Partition items randomly or by a grouping key.

    Fractions must sum to 1; sizes follow the largest-remainder rule.
    With ``by_key`` (an item attribute, e.g. "speaker") every group
    lands in exactly one partition, chosen greedily to fill the largest
    remaining deficit. Fixed seed means identical output.
    """
    items = list(items)
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    part_names = _partition_names(len(fractions), names)
    rng = random.Random(seed)

    if by_key is None:
        order = list(items)
        rng.shuffle(order)
        counts = _largest_remainder_counts(fractions, len(order))
        parts, start = [], 0
        for c in counts:
            parts.append(order[start:start + c])
            start += c
        return dict(zip(part_names, parts))

    missing = [it.filepath for it in items if getattr(it, by_key, None) is None]
    if missing:
        raise DatasetError(
            f"{len(missing)} items lack the split key {by_key!r}: {missing[:5]}"
        )
    groups: dict[str, list[DatasetItem]] = defaultdict(list)
    for it in items:
        groups[getattr(it, by_key)].append(it)
    keys = sorted(groups)
    rng.shuffle(keys)

    targets = [f * len(items) for f in fractions]
    assigned = [0] * len(fractions)
    parts = [[] for _ in fractions]
    for key in keys:
        deficits = [t - a for t, a in zip(targets, assigned)]
        best = max(range(len(fractions)), key=lambda i: (deficits[i], -i))
        parts[best].extend(groups[key])
        assigned[best] += len(groups[key])
    return dict(zip(part_names, parts))


# ---------------------------------------------------------------------------
# Writer

_TSV_UNSAFE = str.maketrans({"\t": " ", "\n": " ", "\r": " "})


def write_dataset(items, format_tag: str, out_dir, base_dir=None,
                  name: str = "dataset") -> Path:
    """Write items as a manifest, copying audio into out_dir if needed.

    ``format_tag`` must be "manifest-csv" (the only writer). Item paths
    are interpreted relative to ``base_dir`` (default: out_dir); when
    base_dir is elsewhere, referenced audio files are copied into
    out_dir under the same relative paths. Missing audio is an error.
    Tabs and newlines inside text fields become single spaces.
    """
    if format_tag != "manifest-csv":
        raise DatasetError(f"unknown output format {format_tag!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = Path(base_dir) if base_dir is not None else out_dir

    items = list(items)
    for item in items:
        src = base / item.filepath
        if not src.exists():
            raise DatasetError(f"{src}: referenced audio does not exist")
        if base != out_dir:
            dst = out_dir / item.filepath
            dst.parent.mkdir(parents=True, exist_ok=True)
            if not dst.exists():
                shutil.copyfile(src, dst)

    has_speaker = any(it.speaker is not None for it in items)
    header = ["duration", "filepath", "text"] + (["speaker"] if has_speaker else [])
    manifest = out_dir / f"{name}.tsv"
    with open(manifest, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        for it in items:
            row = [f"{it.duration:.3f}", it.filepath.translate(_TSV_UNSAFE),
                   it.text.translate(_TSV_UNSAFE)]
            if has_speaker:
                row.append((it.speaker or "").translate(_TSV_UNSAFE))
            fh.write("\t".join(row) + "\n")
    return manifest
