"""
输入图案与注入时序配置
"""
import os


class PatternConfig:
    """图案语料配置类"""

    # 网格尺寸：行 = 红/绿/蓝三个泵，列 = 注入时隙
    ROWS = 3
    COLS = 5
    DYES = ("R", "G", "B")

    # 8 个类别，顺序即读出层输出节点顺序
    CLASS_LABELS = ("P1", "P2", "P3", "P4", "P5", "PU", "PN", "PL")
    VARIANTS_PER_CLASS = 10

    # 注入时序：每个时隙 300 帧，末尾 300 帧空闲，60 fps
    SLOT_FRAMES = int(os.getenv("FLUIDRC_SLOT_FRAMES", 300))
    IDLE_FRAMES = int(os.getenv("FLUIDRC_IDLE_FRAMES", 300))
    FRAME_RATE = 60

    # 相似度平移范围 s ∈ {-2..2}
    MAX_SHIFT = 2

    # 夹具文件路径
    FIXTURES_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "fixtures")
    FIXTURES_FILE = os.getenv(
        "FLUIDRC_PATTERN_FIXTURES",
        os.path.join(FIXTURES_DIR, "canonical_patterns.txt"),
    )

    @classmethod
    def total_frames(cls):
        """一次实验的总帧数（默认 5 × 300 + 300 = 1800）"""
        return cls.COLS * cls.SLOT_FRAMES + cls.IDLE_FRAMES

    @classmethod
    def class_index(cls, label):
        """类别标签 → 输出节点序号"""
        return cls.CLASS_LABELS.index(label)
