"""domelimit: 轴对称砌体穹顶在水平力下的下限极限分析。"""

__all__ = ["__version__"]

__version__ = "0.1.0"
