"""Builds tiny_cnn.onnx: conv -> relu -> global average pool -> flatten.

Input `input` is 1x3x8x8 (NCHW), output `features` is 1x4.
"""
import numpy as np
import onnx
from onnx import TensorProto, helper, numpy_helper

rng = np.random.default_rng(7)
weight = rng.normal(size=(4, 3, 3, 3)).astype(np.float32)
bias = rng.normal(size=(4,)).astype(np.float32)

nodes = [
    helper.make_node("Conv", ["input", "w", "b"], ["conv"], pads=[1, 1, 1, 1]),
    helper.make_node("Relu", ["conv"], ["relu"]),
    helper.make_node("GlobalAveragePool", ["relu"], ["pool"]),
    helper.make_node("Flatten", ["pool"], ["features"], axis=1),
]
graph = helper.make_graph(
    nodes,
    "tiny_cnn",
    [helper.make_tensor_value_info("input", TensorProto.FLOAT, [1, 3, 8, 8])],
    [helper.make_tensor_value_info("features", TensorProto.FLOAT, [1, 4])],
    initializer=[numpy_helper.from_array(weight, "w"), numpy_helper.from_array(bias, "b")],
)
model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])
model.ir_version = 8
onnx.checker.check_model(model)
onnx.save(model, "tiny_cnn.onnx")
