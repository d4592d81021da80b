import io

import numpy as np
import pytest

from cliplearn.embed import (EmbeddingError, EmbeddingTable, coverage, embed_kb, load_embeddings,
                             save_embeddings, train_embeddings)
from cliplearn.kb import to_triples


def test_single_triple_beats_both_corruptions():
    table = train_embeddings([("a", "r", "b")], dim=4, epochs=200, seed=0)
    observed = table.score("a", "r", "b")
    assert observed > table.score("b", "r", "b")
    assert observed > table.score("a", "r", "a")


def test_zero_epochs_keeps_initialisation():
    table = train_embeddings([("a", "r", "b")], dim=3, epochs=0, seed=5)
    rng = np.random.default_rng(5)
    E = rng.uniform(-0.1, 0.1, (2, 3))
    assert table.losses == []
    assert np.array_equal(table.entity_vectors["a"], E[0])
    assert np.array_equal(table.entity_vectors["b"], E[1])


def test_loss_non_increasing_over_windows(family):
    # fresh corruptions each epoch make single-epoch losses noisy; compare 10-epoch means
    losses = train_embeddings(to_triples(family), dim=8, epochs=40, lr=0.05, seed=0).losses
    means = np.array(losses).reshape(4, 10).mean(axis=1)
    assert np.all(np.diff(means) <= 0)


def test_observed_outscore_corrupted(synth):
    triples = to_triples(synth)
    assert len(triples) >= 10
    table = train_embeddings(triples, dim=16, epochs=100, seed=0)
    rng = np.random.default_rng(1)
    ents = sorted(table.entity_vectors)
    obs = np.mean([table.score(*t) for t in triples])
    corrupted = []
    for h, r, t in triples:
        for _ in range(10):
            e = ents[rng.integers(len(ents))]
            corrupted.append(table.score(e, r, t) if rng.random() < 0.5 else table.score(h, r, e))
    assert obs > np.mean(corrupted)


def test_deterministic_given_seed(family):
    a = save_embeddings(train_embeddings(to_triples(family), dim=4, epochs=5, seed=3))
    b = save_embeddings(train_embeddings(to_triples(family), dim=4, epochs=5, seed=3))
    assert a == b


def test_every_triple_entity_has_vector(synth):
    triples = to_triples(synth)
    table = train_embeddings(triples, dim=4, epochs=1, seed=0)
    assert coverage(table, {t[0] for t in triples} | {t[2] for t in triples}) == []


def test_embed_kb_covers_isolated_individuals(family):
    table = embed_kb(family, dim=4, epochs=2)
    assert coverage(table, family.individuals) == []


def test_roundtrip_is_exact(family):
    table = embed_kb(family, dim=5, epochs=3)
    back = load_embeddings(save_embeddings(table))
    assert back.dim == 5
    assert back.entity_vectors.keys() == table.entity_vectors.keys()
    for k, v in table.entity_vectors.items():
        assert np.array_equal(back.entity_vectors[k], v)
    for k, v in table.relation_vectors.items():
        assert np.array_equal(back.relation_vectors[k], v)


def test_load_from_stream_and_bytes():
    text = "id,dim=2\na,0.5,1\n"
    for src in (io.StringIO(text), text.encode(), io.BytesIO(text.encode())):
        assert load_embeddings(src).entity_vectors["a"].tolist() == [0.5, 1.0]


def test_import_forty_dim_file():
    rows = "\n".join(f"e{i}," + ",".join(["0.1"] * 40) for i in range(3))
    assert load_embeddings(rows).dim == 40


def test_headerless_file_infers_dim():
    assert load_embeddings("x,1,2,3\n").dim == 3


def test_arity_error_names_row():
    with pytest.raises(EmbeddingError, match="'b'"):
        load_embeddings("id,dim=3\na,1,2,3\nb,1,2\n")


def test_duplicate_id_rejected():
    with pytest.raises(EmbeddingError, match="duplicate"):
        load_embeddings("a,1,2\na,3,4\n")


@pytest.mark.parametrize("bad", ["", "a,1,x\n"])
def test_malformed_files(bad):
    with pytest.raises(EmbeddingError):
        load_embeddings(bad)


def test_training_preconditions():
    with pytest.raises(EmbeddingError):
        train_embeddings([], dim=4)
    with pytest.raises(EmbeddingError):
        train_embeddings([("a", "r", "b")], dim=1)


def test_diverging_training_aborts():
    with pytest.raises(EmbeddingError, match="smaller learning rate"):
        train_embeddings([("a", "r", "b"), ("b", "r", "a")], dim=2, epochs=5, lr=1e150, seed=0)


def test_table_rejects_wrong_vector_length():
    with pytest.raises(EmbeddingError):
        EmbeddingTable(3, {"a": np.zeros(2)})


def test_matrix_missing_id():
    with pytest.raises(EmbeddingError, match="'zz'"):
        EmbeddingTable(2, {"a": np.zeros(2)}).matrix(["a", "zz"])
