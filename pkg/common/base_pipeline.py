"""
端到端流水线：模拟 → 量化 → 划分/增强/集成训练/评估 → 分析 → 报告

各阶段按 PipelineStage 注册，统一入口 FluidPipeline.run() 返回结果字典，
阶段内抛出的 FluidRCError 被转换为 success=False 的结果。
"""
import json
import logging
import os
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from analysis.utils.config import AnalysisConfig, ExperimentConfig
from analysis.utils.experiments import closest_cross_class_pairs, quantized_corpus, run_cell
from analysis.utils.information import mutual_information
from augmentation.utils.config import AugmentationConfig
from patterns.utils.config import PatternConfig
from patterns.utils.pattern_corpus import canonical_corpus, similarity_matrix
from readout.utils.config import ReadoutConfig, TrainConfig
from reservoir_sim.utils.config import ReservoirConfig, load_chip_config
from reservoir_sim.utils.reservoir_simulator import chip_config_hash, run_corpus
from signal_processing.utils.config import QuantizationConfig, SignalConfig, normalize_areas
from signal_processing.utils.signal_processor import mad_matrix, quantize_all
from .errors import ConfigError, FluidRCError
from .record_io import write_json, write_quantized, write_signal_records, write_table
from .report_renderer import ReportRenderer
from .seeding import STAGE_SENSOR_NOISE, config_hash, derive_seed, file_sha256

logger = logging.getLogger(__name__)


class PipelineStage(Enum):
    """流水线阶段，顺序即执行顺序"""
    SIMULATE = "simulate"
    QUANTIZE = "quantize"
    TRAIN = "train"
    ANALYZE = "analyze"
    REPORT = "report"

    @classmethod
    def list_stages(cls):
        return [stage.value for stage in cls]


class StageResult:
    """流水线结果数据类"""

    def __init__(self, success: bool, output_path: Optional[str] = None,
                 error_msg: Optional[str] = None, metadata: Optional[Dict] = None):
        self.success = success
        self.output_path = output_path
        self.error_msg = error_msg
        self.metadata = metadata or {}

    def to_dict(self):
        """转换为字典格式，便于JSON序列化"""
        return {
            "success": self.success,
            "output_path": self.output_path,
            "error_msg": self.error_msg,
            "metadata": self.metadata,
        }


class RunConfig(BaseModel):
    """
    一次流水线运行的全部参数

    Attributes:
        chip_config: 芯片配置 JSON 路径（None 使用默认芯片）
        noise_sigma: 传感器偏移噪声标准差
        out_dir: 报告输出目录
        其余字段与 ExperimentConfig 相同
    """

    chip_config: Optional[str] = None
    q: int = Field(default=SignalConfig.DEFAULT_Q, ge=1)
    areas: List[str] = Field(default_factory=lambda: list(SignalConfig.DEFAULT_AREAS))
    records_per_pattern: int = Field(default=ReadoutConfig.TRAIN_POOL_PER_CLASS, ge=1,
                                     le=ReadoutConfig.TRAIN_POOL_PER_CLASS)
    augment: bool = True
    sigma: float = Field(default=AugmentationConfig.DEFAULT_SIGMA, ge=0.0)
    target_total: int = Field(default=AugmentationConfig.DEFAULT_TARGET_TOTAL, gt=0)
    n_models: int = Field(default=ReadoutConfig.N_MODELS, ge=1)
    seed: int = Field(default=AugmentationConfig.DEFAULT_SEED, ge=0)
    noise_sigma: float = Field(default=float(os.getenv("FLUIDRC_NOISE_SIGMA", 2.0)), ge=0.0)
    mi_unit: str = AnalysisConfig.DEFAULT_MI_UNIT
    workers: int = Field(default=ReservoirConfig.WORKERS, ge=1)
    out_dir: str = "fluidrc_out"
    train: TrainConfig = Field(default_factory=TrainConfig)

    @field_validator("areas", mode="before")
    @classmethod
    def _normalize_areas(cls, v):
        return normalize_areas(v)

    @field_validator("mi_unit")
    @classmethod
    def _check_unit(cls, v):
        if v not in AnalysisConfig.MI_UNITS:
            raise ValueError(f"mi_unit must be one of {AnalysisConfig.MI_UNITS}")
        return v

    @model_validator(mode="after")
    def _check(self):
        n_frames = PatternConfig.total_frames()
        if n_frames % self.q != 0:
            raise ValueError(f"Q={self.q} does not divide {n_frames} frames")
        if self.chip_config is not None and not os.path.exists(self.chip_config):
            raise ValueError(f"chip config not found: {self.chip_config}")
        return self

    @classmethod
    def load(cls, path: Optional[str] = None, **overrides) -> "RunConfig":
        """
        读取 JSON 运行配置并叠加命令行参数

        Raises:
            ConfigError: 文件缺失、JSON 损坏或参数越界
        """
        payload: Dict[str, Any] = {}
        if path is not None:
            if not os.path.exists(path):
                raise ConfigError(f"run config not found: {path}")
            try:
                with open(path, "r", encoding="utf-8") as f:
                    payload = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"run config {path} is not valid JSON: {e}")
        payload.update({k: v for k, v in overrides.items() if v is not None})
        return validated(cls, **payload)

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            q=self.q,
            areas=self.areas,
            records_per_pattern=self.records_per_pattern,
            augment=self.augment,
            sigma=self.sigma,
            target_total=self.target_total,
            n_models=self.n_models,
            seed=self.seed,
            workers=self.workers,
            train=self.train,
        )

    def reproducible_dump(self) -> Dict:
        """影响结果的参数（不含输出目录、线程数与本地路径）"""
        return self.model_dump(mode="json", exclude={"out_dir", "workers", "chip_config"})


def validated(model_cls, **payload):
    """构造 pydantic 模型，把校验失败转换为 ConfigError"""
    try:
        return model_cls(**payload)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(p) for p in first.get("loc", ())) or model_cls.__name__
        raise ConfigError(f"{loc}: {first['msg']}")


class FluidPipeline:
    """
    端到端实验流水线

    与格式转换器的注册方式一致：每个 PipelineStage 注册一个处理函数，
    run() 依次执行并在共享的上下文字典中传递中间产物。
    """

    def __init__(self):
        self._stages: Dict[PipelineStage, Callable[[Dict], None]] = {}
        self._register_stages()
        self.renderer = ReportRenderer()

    def _register_stages(self):
        self._stages[PipelineStage.SIMULATE] = self._simulate
        self._stages[PipelineStage.QUANTIZE] = self._quantize
        self._stages[PipelineStage.TRAIN] = self._train
        self._stages[PipelineStage.ANALYZE] = self._analyze
        self._stages[PipelineStage.REPORT] = self._report

    def get_supported_stages(self) -> List[str]:
        return [stage.value for stage in self._stages]

    def run(self, cfg: RunConfig) -> Dict[str, Any]:
        """
        执行全部阶段

        Args:
            cfg (RunConfig): 运行参数

        Returns:
            dict: {"success", "output_path", "error_msg", "metadata"}；
                失败时 metadata 含 stage 与 exit_code
        """
        out_dir = Path(cfg.out_dir)
        ctx: Dict[str, Any] = {"cfg": cfg, "out_dir": out_dir, "files": []}
        for stage, handler in self._stages.items():
            logger.info("stage %s", stage.value)
            try:
                handler(ctx)
            except ValidationError as e:
                err = ConfigError(str(e.errors()[0]["msg"]), stage=stage.value)
                return self._failure(err)
            except FluidRCError as e:
                if e.stage is None:
                    e.stage = stage.value
                return self._failure(e)
        return StageResult(
            success=True,
            output_path=str(out_dir),
            metadata={
                "mean_accuracy": ctx["cell"].report.mean,
                "std_accuracy": ctx["cell"].report.std,
                "config_hash": ctx["config_hash"],
                "files": len(ctx["files"]),
            },
        ).to_dict()

    @staticmethod
    def _failure(err: FluidRCError) -> Dict[str, Any]:
        logger.error("%s", err)
        return StageResult(
            success=False,
            error_msg=str(err),
            metadata={"stage": err.stage, "exit_code": err.exit_code},
        ).to_dict()

    def _emit(self, ctx: Dict, path: Path):
        ctx["files"].append(path)
        side = path.with_suffix(".json")
        if path.suffix == ".csv" and side.exists():
            ctx["files"].append(side)

    # ------------------------------------------------------------ 阶段实现

    def _simulate(self, ctx: Dict):
        cfg: RunConfig = ctx["cfg"]
        corpus = canonical_corpus()
        topo, optics = load_chip_config(cfg.chip_config)
        noise_seed = derive_seed(cfg.seed, STAGE_SENSOR_NOISE)
        signals = run_corpus(corpus, topo, optics, noise_sigma=cfg.noise_sigma,
                             seed=noise_seed, workers=cfg.workers)
        for path in write_signal_records(signals, ctx["out_dir"] / "signals"):
            self._emit(ctx, path)
        ctx.update({
            "corpus": corpus,
            "signals": signals,
            "noise_seed": noise_seed,
            "chip_hash": chip_config_hash(topo, optics),
        })

    def _quantize(self, ctx: Dict):
        cfg: RunConfig = ctx["cfg"]
        exp = cfg.experiment()
        corpus_q = quantized_corpus(ctx["signals"], exp)
        path = write_quantized(corpus_q, ctx["out_dir"] / "quantized" / "corpus.csv")
        self._emit(ctx, path)
        ctx.update({"experiment": exp, "corpus_q": corpus_q})

    def _train(self, ctx: Dict):
        cell = run_cell(ctx["corpus_q"], ctx["experiment"])
        qdir = ctx["out_dir"] / "quantized"
        scalar = cell.report.scalar
        self._emit(ctx, write_quantized(cell.train, qdir / "train.csv", scalar=scalar))
        self._emit(ctx, write_quantized(cell.test, qdir / "test.csv", scalar=scalar))
        if cell.synthetic:
            self._emit(ctx, write_quantized(cell.synthetic, qdir / "synthetic.csv", scalar=scalar))
        ctx["cell"] = cell

    def _analyze(self, ctx: Dict):
        cfg: RunConfig = ctx["cfg"]
        out_dir: Path = ctx["out_dir"]
        corpus, signals = ctx["corpus"], ctx["signals"]

        similarity = similarity_matrix(corpus, by="class")
        mad = mad_matrix(signals, by="class")
        for name, matrix in (("similarity_class.csv", similarity), ("mad_class.csv", mad)):
            frame = matrix.to_frame()
            frame["within"] = matrix.within
            write_table(frame, out_dir / name, {"by": matrix.by, "config_hash": ctx["chip_hash"]})
            self._emit(ctx, out_dir / name)

        all_areas = quantize_all(signals, QuantizationConfig(q=cfg.q, areas=list(ReservoirConfig.DETECTION_AREAS)))
        heatmap = mutual_information(all_areas, corpus, unit=cfg.mi_unit)
        mi_path = out_dir / f"mi_q{cfg.q}.csv"
        write_table(heatmap.to_frame(), mi_path, {**heatmap.metadata(), "seed": cfg.seed})
        self._emit(ctx, mi_path)

        ctx.update({
            "similarity": similarity,
            "mad": mad,
            "heatmap": heatmap,
            "closest_pairs": closest_cross_class_pairs(similarity_matrix(corpus, by="variant")),
        })

    def _report(self, ctx: Dict):
        cfg: RunConfig = ctx["cfg"]
        out_dir: Path = ctx["out_dir"]
        cell = ctx["cell"]
        ensemble = cell.report.to_dict()
        reproducible = {**cfg.reproducible_dump(), "chip_config_hash": ctx["chip_hash"]}
        ctx["config_hash"] = config_hash(reproducible)
        seeds = {"master": cfg.seed, STAGE_SENSOR_NOISE: ctx["noise_seed"], **cell.seeds}
        heatmap = ctx["heatmap"]
        report = {
            "config": reproducible,
            "config_hash": ctx["config_hash"],
            "seeds": seeds,
            "n_features": ctx["corpus_q"][0].features.size,
            "n_train": len(cell.augmented),
            "n_synthetic": len(cell.synthetic),
            "n_test": len(cell.test),
            "ensemble": ensemble,
            "closest_pairs": ctx["closest_pairs"],
            "within": [
                {"label": label, "similarity": float(s), "mad": float(m)}
                for label, s, m in zip(ctx["similarity"].labels, ctx["similarity"].within, ctx["mad"].within)
            ],
            "mi": {
                "q": heatmap.q,
                "unit": heatmap.unit,
                "rows": heatmap.rows,
                "columns": heatmap.columns,
                "values": heatmap.values.tolist(),
            },
        }
        write_json(out_dir / "report.json", report)
        self._emit(ctx, out_dir / "report.json")

        md_path = self.renderer.render_markdown(
            {**report, "classes": list(PatternConfig.CLASS_LABELS)}, str(out_dir / "report.md")
        )
        self._emit(ctx, Path(md_path))
        ok, html_path, error = self.renderer.convert_to_html(md_path)
        if ok:
            self._emit(ctx, Path(html_path))
        else:
            logger.warning("HTML report skipped: %s", error)

        files = sorted({p.relative_to(out_dir).as_posix() for p in ctx["files"]})
        write_json(out_dir / "manifest.json", {
            "config_hash": ctx["config_hash"],
            "seeds": {**seeds, "ensemble_members": cell.report.seeds},
            "files": {name: file_sha256(out_dir / name) for name in files},
        })
        ctx["files"].append(out_dir / "manifest.json")
