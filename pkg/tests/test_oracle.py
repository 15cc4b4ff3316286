import ast
from pathlib import Path

import numpy as np
import pytest

import semanticache.oracle as oracle
from semanticache.oracle import ref_attention, ref_gsc


def test_ref_gsc_trivial():
    assert ref_gsc([[1, 2]] * 4, 0.5) == [[0, 1, 2, 3]]
    assert ref_gsc(np.eye(4).tolist(), 0.5) == [[0], [1], [2], [3]]
    assert ref_gsc([], 0.5) == []
    with pytest.raises(ValueError):
        ref_gsc([[1, 0]], 2.0)


def test_ref_gsc_hand_traced():
    # seed 0 absorbs 2 (parallel); seed 1 absorbs 3; 4 is opposite to everything
    keys = [[1, 0], [0, 1], [2, 0], [0.1, 1], [-1, -1]]
    assert ref_gsc(keys, 0.9) == [[0, 2], [1, 3], [4]]


def test_ref_attention_trivial():
    out = ref_attention([[0.3, 0.4]], [[1, 1]], [[5, -5]], [7])
    assert out == [[5.0, -5.0]]
    K = [[1, 0], [0, 1], [1, 1]]
    V = [[1, 2], [3, 4], [5, 6]]
    a = ref_attention([[0.2, -0.3]], K, V)
    b = ref_attention([[0.2, -0.3]], K, V, [1, 1, 1])
    assert a == b
    with pytest.raises(ValueError):
        ref_attention([[1, 2]], K, V, [1, 1])


def test_oracle_shares_no_code_with_engine():
    tree = ast.parse(Path(oracle.__file__).read_text())
    imported = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            imported.add((node.level, node.module))
        elif isinstance(node, ast.Import):
            imported.update((0, a.name) for a in node.names)
    assert all(level == 0 for level, _ in imported), imported
    assert {mod for _, mod in imported} <= {"__future__", "math"}
