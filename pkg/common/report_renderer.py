"""
流水线报告渲染：jinja2 模板 → Markdown → markdown2 → HTML
"""
import logging
import os
import re
from typing import Any, Dict, Optional

import markdown2
from jinja2 import Environment, FileSystemLoader, StrictUndefined

logger = logging.getLogger(__name__)


class ReportConfig:
    """报告渲染配置类"""

    DEFAULT_TITLE = "fluidrc 实验报告"
    DEFAULT_ENCODING = "utf-8"
    TEMPLATES_DIR = os.getenv(
        "FLUIDRC_TEMPLATES_DIR",
        os.path.join(os.path.dirname(__file__), "templates"),
    )
    REPORT_TEMPLATE = "report.md.j2"

    CSS = """
body { font-family: "Helvetica Neue", Arial, "PingFang SC", sans-serif; max-width: 960px; margin: 2em auto; color: #222; }
table { border-collapse: collapse; margin: 1em 0; }
th, td { border: 1px solid #ccc; padding: 4px 8px; text-align: right; }
th:first-child, td:first-child { text-align: left; }
code { background: #f4f4f4; padding: 0 4px; }
.table-container { overflow-x: auto; }
"""


class ReportRenderer:
    """Markdown/HTML 报告渲染器"""

    def __init__(self, templates_dir: Optional[str] = None):
        self.env = Environment(
            loader=FileSystemLoader(templates_dir or ReportConfig.TEMPLATES_DIR),
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
            undefined=StrictUndefined,
        )
        self.markdown_extras = {
            "tables": None,
            "header-ids": None,
            "code-friendly": None,
            "middle-word-em": None,
            "cuddled-lists": None,
        }
        self.md = markdown2.Markdown(extras=self.markdown_extras)

    def render_markdown(self, context: Dict[str, Any], output_file: str,
                        template: str = ReportConfig.REPORT_TEMPLATE) -> str:
        """
        用模板渲染 Markdown 报告

        Args:
            context (dict): 模板变量
            output_file (str): 输出路径
            template (str): 模板文件名

        Returns:
            str: 输出路径
        """
        context = dict(context)
        context.setdefault("title", ReportConfig.DEFAULT_TITLE)
        text = self.env.get_template(template).render(**context)
        with open(output_file, "w", encoding=ReportConfig.DEFAULT_ENCODING, newline="\n") as f:
            f.write(text)
        return output_file

    def convert_to_html(self, markdown_file: str, output_file: Optional[str] = None,
                        title: Optional[str] = None):
        """
        Markdown 报告 → 独立 HTML 文件

        Args:
            markdown_file (str): Markdown 文件
            output_file (str, optional): 输出路径，缺省为同名 .html
            title (str, optional): 文档标题，缺省取第一个一级标题

        Returns:
            tuple: (success: bool, output_path: str, error_msg: str)
        """
        if not os.path.exists(markdown_file):
            return False, None, f"找不到文件: {markdown_file}"
        if output_file is None:
            output_file = f"{os.path.splitext(markdown_file)[0]}.html"
        try:
            with open(markdown_file, "r", encoding=ReportConfig.DEFAULT_ENCODING) as f:
                markdown_content = f.read()
            html_content = self._wrap_tables_in_containers(self.md.convert(markdown_content))
            title = title or self._extract_title(markdown_content) or ReportConfig.DEFAULT_TITLE
            with open(output_file, "w", encoding=ReportConfig.DEFAULT_ENCODING, newline="\n") as f:
                f.write(self._build_html(html_content, title))
            return True, output_file, None
        except OSError as e:
            logger.warning("failed to write HTML report %s: %s", output_file, e)
            return False, None, str(e)

    @staticmethod
    def _extract_title(markdown_content: str) -> Optional[str]:
        for line in markdown_content.split("\n"):
            if line.strip().startswith("# "):
                return line.strip()[2:].strip()
        return None

    @staticmethod
    def _wrap_tables_in_containers(html_content: str) -> str:
        return re.sub(
            r"(<table[^>]*>.*?</table>)",
            lambda m: f'<div class="table-container">{m.group(1)}</div>',
            html_content,
            flags=re.DOTALL,
        )

    @staticmethod
    def _build_html(html_content: str, title: str) -> str:
        return (
            "<!DOCTYPE html>\n"
            '<html lang="zh-CN">\n<head>\n<meta charset="utf-8">\n'
            f"<title>{title}</title>\n<style>{ReportConfig.CSS}</style>\n"
            f"</head>\n<body>\n{html_content}\n</body>\n</html>\n"
        )
