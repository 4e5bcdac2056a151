import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from onebp.model import EmbeddingModel, init_model, score, score_all_items


def hand_model(users, items):
    return EmbeddingModel(np.asarray(users, np.float32), np.asarray(items, np.float32))


def test_init_deterministic():
    a, b = init_model(5, 7, 3, seed=11), init_model(5, 7, 3, seed=11)
    assert a.user_embeddings.tobytes() == b.user_embeddings.tobytes()
    assert a.item_embeddings.tobytes() == b.item_embeddings.tobytes()
    assert a.user_embeddings.dtype == np.float32


def test_init_statistics():
    m = init_model(1000, 1000, 64, seed=1)
    x = np.concatenate([m.user_embeddings.ravel(), m.item_embeddings.ravel()]).astype(np.float64)
    assert abs(x.mean()) < 0.002
    assert abs(x.std() - 0.1) < 0.005


def test_init_minimal_and_errors():
    m = init_model(1, 1, 1, seed=0)
    assert m.user_embeddings.shape == (1, 1) and m.item_embeddings.shape == (1, 1)
    with pytest.raises(ValueError):
        init_model(0, 1, 1, 0)


@pytest.mark.parametrize("u, v, expected", [
    ([1, 0], [1, 0], 1.0),
    ([1, 2], [3, -1], 1.0),
    ([0, 0], [5, -7], 0.0),
])
def test_score_examples(u, v, expected):
    assert score(hand_model([u], [v]), 0, 0) == expected


def test_score_out_of_range():
    m = hand_model([[1.0]], [[1.0]])
    with pytest.raises(IndexError):
        score(m, 1, 0)
    with pytest.raises(IndexError):
        score(m, 0, -1)


def test_score_all_items_hand():
    m = hand_model([[1, 2], [0, 0]], [[1, 1], [2, -1], [0.5, 0.25]])
    # 1*1+2*1, 1*2+2*(-1), 1*0.5+2*0.25
    assert score_all_items(m, 0).tolist() == [3.0, 0.0, 1.0]
    assert score_all_items(m, 1).tolist() == [0.0, 0.0, 0.0]


@given(arrays(np.float32, (3, 4), elements=st.floats(-2, 2, width=32)),
       arrays(np.float32, (5, 4), elements=st.floats(-2, 2, width=32)))
def test_score_all_matches_score(users, items):
    m = EmbeddingModel(users, items)
    for u in range(3):
        full = score_all_items(m, u)
        np.testing.assert_allclose(full, [score(m, u, j) for j in range(5)], rtol=1e-12, atol=1e-12)


@given(arrays(np.float32, (4,), elements=st.floats(-2, 2, width=32)),
       arrays(np.float32, (4,), elements=st.floats(-2, 2, width=32)),
       st.sampled_from([0.0, 0.5, 2.0, -4.0]))
def test_score_bilinear(u, v, c):
    base = score(EmbeddingModel(u[None], v[None]), 0, 0)
    scaled = score(EmbeddingModel((c * u)[None], v[None]), 0, 0)
    assert scaled == pytest.approx(c * base, abs=1e-12)


def test_binary_round_trip(tmp_path):
    m = init_model(3, 4, 5, seed=2)
    blob = m.to_bytes()
    assert blob[:4] == b"OBP1"
    assert np.frombuffer(blob[4:28], "<u8").tolist() == [3, 4, 5]
    assert len(blob) == 28 + 4 * 5 * 7
    back = EmbeddingModel.from_bytes(blob)
    assert np.array_equal(back.user_embeddings, m.user_embeddings)
    assert np.array_equal(back.item_embeddings, m.item_embeddings)
    m.save(tmp_path / "m.obp")
    assert (tmp_path / "m.obp").read_bytes() == blob
    with pytest.raises(ValueError):
        EmbeddingModel.from_bytes(blob[:-1])
    with pytest.raises(ValueError):
        EmbeddingModel.from_bytes(b"XXXX" + blob[4:])


def test_csv_export(tmp_path):
    m = hand_model([[1, 2]], [[3, 4], [5, 6]])
    m.to_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "entity,index,dim0,dim1"
    assert lines[1:] == ["user,0,1.0,2.0", "item,0,3.0,4.0", "item,1,5.0,6.0"]
