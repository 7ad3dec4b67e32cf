"""
记录与分析结果的持久化

所有表格都写成 CSV + 同名 JSON 元数据文件（sidecar）。浮点数以最短可往返
表示写出，读取时使用 round_trip 解析，保证写入 → 读取逐位一致。
"""
import json
import logging
import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from patterns.utils.config import PatternConfig
from reservoir_sim.utils.config import ReservoirConfig
from reservoir_sim.utils.reservoir_simulator import SignalRecord
from signal_processing.utils.signal_processor import QuantizedRecord
from .errors import DataError, DimensionError, RecordParseError
from .seeding import json_default

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

FRAME_COLUMN = "frame"


def sidecar_path(csv_path: PathLike) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_json(path: PathLike, payload: Dict):
    """排序键、固定缩进的 JSON，重复写出逐字节一致"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(payload, indent=2, sort_keys=True, default=json_default))
        f.write("\n")


def read_json(path: PathLike) -> Dict:
    if not os.path.exists(path):
        raise RecordParseError(str(path), None, "file not found")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise RecordParseError(str(path), e.lineno, f"invalid JSON: {e.msg}")


def write_table(frame: pd.DataFrame, path: PathLike, metadata: Optional[Dict] = None, index: bool = True):
    """矩阵/网格/结果表 → CSV + sidecar"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=index, lineterminator="\n")
    if metadata is not None:
        write_json(sidecar_path(path), metadata)


def read_table(path: PathLike, index: bool = True) -> Tuple[pd.DataFrame, Optional[Dict]]:
    if not os.path.exists(path):
        raise RecordParseError(str(path), None, "file not found")
    try:
        frame = pd.read_csv(path, index_col=0 if index else None, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise RecordParseError(str(path), 1, "empty file")
    except pd.errors.ParserError as e:
        raise RecordParseError(str(path), None, str(e).strip())
    side = sidecar_path(path)
    return frame, (read_json(side) if side.exists() else None)


# ---------------------------------------------------------------- 原始信号记录

def signal_columns() -> List[str]:
    return [FRAME_COLUMN] + ReservoirConfig.series_names()


def write_signal_record(rec: SignalRecord, out_dir: PathLike) -> Path:
    """
    写出 <CLASS>_V<n>.csv 与 sidecar

    Args:
        rec (SignalRecord): 原始记录
        out_dir: 输出目录

    Returns:
        Path: CSV 路径
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{rec.name}.csv"
    frame = pd.DataFrame(rec.table(), columns=ReservoirConfig.series_names())
    frame.insert(0, FRAME_COLUMN, np.arange(rec.n_frames))
    frame.to_csv(path, index=False, lineterminator="\n")
    write_json(sidecar_path(path), {
        "class": rec.class_label,
        "variant": rec.variant_id,
        "seed": rec.seed,
        "config_hash": rec.config_hash,
        "baseline": rec.baseline,
        "floor": rec.floor,
        "synthetic": rec.synthetic,
        "metadata": rec.metadata,
    })
    return path


def write_signal_records(records: Sequence[SignalRecord], out_dir: PathLike) -> List[Path]:
    return [write_signal_record(r, out_dir) for r in records]


def _check_header(path: str):
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip()
    if not first:
        raise RecordParseError(path, 1, "empty file")
    header = [c.strip() for c in first.split(",")]
    expected = signal_columns()
    if header != expected:
        if header and header[0].replace(".", "", 1).lstrip("-").isdigit():
            raise RecordParseError(path, 1, "missing header row")
        raise RecordParseError(path, 1, f"header must be {','.join(expected)}")


def read_signal_record(path: PathLike, n_frames: Optional[int] = None) -> SignalRecord:
    """
    读取并校验一条原始记录

    Args:
        path: CSV 路径，旁边须有同名 JSON sidecar
        n_frames (int, optional): 期望帧数，默认 1800

    Returns:
        SignalRecord: 校验后的记录

    Raises:
        RecordParseError: 表头、数值或 sidecar 不合法（带行号）
        DimensionError: 行数不等于期望帧数
    """
    path = str(path)
    n_frames = n_frames or PatternConfig.total_frames()
    if not os.path.exists(path):
        raise RecordParseError(path, None, "file not found")
    _check_header(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as e:
        raise RecordParseError(path, None, str(e).strip())

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1).to_numpy()
    if bad.any():
        row = int(np.argmax(bad))
        col = numeric.columns[numeric.iloc[row].isna().to_numpy()][0]
        raise RecordParseError(path, row + 2, f"non-numeric value in column {col}: {frame.iloc[row][col]!r}")
    # 数值列按 round_trip 精度重新解析
    values = np.array([[float(v) for v in row] for row in frame.iloc[:, 1:].to_numpy()], dtype=float)
    frames = numeric[FRAME_COLUMN].to_numpy()
    expected_frames = np.arange(len(frames))
    if not np.array_equal(frames, expected_frames):
        row = int(np.argmax(frames != expected_frames))
        raise RecordParseError(path, row + 2, f"frame index {frames[row]} out of sequence")
    out_of_range = (values < ReservoirConfig.RAW_MIN) | (values > ReservoirConfig.RAW_MAX)
    if out_of_range.any():
        row = int(np.argmax(out_of_range.any(axis=1)))
        raise RecordParseError(path, row + 2, "value outside raw range [0, 255]")
    if len(values) != n_frames:
        raise DimensionError(f"{path}: expected {n_frames} frames, got {len(values)}")

    side = sidecar_path(path)
    if not side.exists():
        raise RecordParseError(str(side), None, "missing sidecar")
    meta = read_json(side)
    missing = [k for k in ("class", "variant", "baseline", "floor") if k not in meta]
    if missing:
        raise RecordParseError(str(side), None, f"sidecar missing keys: {missing}")
    baseline, floor = float(meta["baseline"]), float(meta["floor"])
    if not (meta.get("synthetic") or (meta.get("metadata") or {}).get("white_balanced")):
        outside = (values < floor) | (values > baseline)
        if outside.any():
            row = int(np.argmax(outside.any(axis=1)))
            raise RecordParseError(path, row + 2, f"value outside optical range [{floor:g}, {baseline:g}]")
    try:
        return SignalRecord(
            class_label=meta["class"],
            variant_id=meta["variant"],
            signals=values.T.reshape(len(ReservoirConfig.DETECTION_AREAS), len(ReservoirConfig.CHANNELS), -1),
            seed=meta.get("seed"),
            baseline=baseline,
            floor=floor,
            config_hash=meta.get("config_hash"),
            synthetic=bool(meta.get("synthetic", False)),
            metadata=meta.get("metadata") or {},
        )
    except DataError as e:
        raise RecordParseError(path, None, e.message)


def _record_order(rec: SignalRecord):
    label = rec.class_label
    if label in PatternConfig.CLASS_LABELS:
        return (0, PatternConfig.class_index(label), rec.variant_id or 0, "")
    return (1, 0, rec.variant_id or 0, str(label))


def ingest_signals(path: PathLike, n_frames: Optional[int] = None) -> List[SignalRecord]:
    """
    导入单个 CSV 或目录下全部 CSV（例如实验室采集的真实信号）

    Returns:
        list: 按类别、变体号排序的记录
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.glob("*.csv"))
        if not files:
            raise DataError(f"no CSV records in {path}")
    elif path.exists():
        files = [path]
    else:
        raise RecordParseError(str(path), None, "file not found")
    records = [read_signal_record(p, n_frames) for p in files]
    logger.info("ingested %d signal records from %s", len(records), path)
    return sorted(records, key=_record_order)


# ---------------------------------------------------------------- 量化数据集

def write_quantized(records: Sequence[QuantizedRecord], path: PathLike, scalar: Optional[float] = None,
                    n_frames: Optional[int] = None) -> Path:
    """量化记录 → feature_0..feature_{n-1}, class, variant, synthetic"""
    if not records:
        raise DataError("cannot write an empty quantized dataset")
    first = records[0]
    columns = [f"feature_{i}" for i in range(first.features.size)]
    frame = pd.DataFrame(np.vstack([r.features for r in records]), columns=columns)
    frame["class"] = [r.class_label for r in records]
    frame["variant"] = [r.variant_id for r in records]
    frame["synthetic"] = [int(r.synthetic) for r in records]
    write_table(frame, path, {
        "q": first.q,
        "series": list(first.series),
        "n_frames": n_frames or PatternConfig.total_frames(),
        "scalar": scalar,
    }, index=False)
    return Path(path)


def read_quantized(path: PathLike) -> Tuple[List[QuantizedRecord], Dict]:
    frame, meta = read_table(path, index=False)
    if meta is None:
        raise RecordParseError(str(sidecar_path(path)), None, "missing sidecar")
    feature_cols = [c for c in frame.columns if str(c).startswith("feature_")]
    missing = [c for c in ("class", "variant", "synthetic") if c not in frame.columns]
    if not feature_cols or missing:
        raise RecordParseError(str(path), 1, f"not a quantized dataset (missing columns: {missing or 'feature_*'})")
    if frame.empty:
        raise RecordParseError(str(path), 2, "no records")
    records = []
    for i, row in enumerate(frame.itertuples(index=False)):
        values = dict(zip(frame.columns, row))
        try:
            records.append(QuantizedRecord(
                features=np.array([values[c] for c in feature_cols], dtype=float),
                class_label=values["class"],
                variant_id=int(values["variant"]),
                q=int(meta["q"]),
                series=tuple(meta["series"]),
                synthetic=bool(int(values["synthetic"])),
            ))
        except (KeyError, ValueError, DataError) as e:
            raise RecordParseError(str(path), i + 2, str(e))
    return records, meta
