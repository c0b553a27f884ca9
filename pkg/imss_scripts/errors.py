"""IMSS 仿真器统一异常定义

所有模块只抛出这里定义的异常，工具层据此填写结果字典中的 error / error_type。
"""


class ImssError(Exception):
    """IMSS 仿真器异常基类"""


class ConfigurationError(ImssError, ValueError):
    """参数或配置文件非法（负的方差比、重叠的阻值区间、非正增益等）"""


class DimensionError(ImssError, ValueError):
    """向量长度或矩阵维度不匹配"""


class IndexOutOfRangeError(ImssError, IndexError):
    """列号、像素索引等越界"""


class StateError(ImssError, RuntimeError):
    """对象处于不允许该操作的状态（空数据库、未物化、未拟合）"""


class DomainError(ImssError, ValueError):
    """输入超出数学定义域（编码值越界、除零等）"""


class FitError(ImssError):
    """预处理模型拟合失败"""


class SplitError(ImssError):
    """训练/测试划分失败"""


class DataFormatError(ImssError):
    """数据文件格式错误（魔数、版本、NaN/Inf 等）"""
