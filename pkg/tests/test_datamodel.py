import pytest

import numpy as np

from retrodecode.datamodel import (
    Block,
    BlockRef,
    DataSplit,
    DegenerateBlockError,
    IneligibleSessionError,
    LabeledSample,
    ManifestEntry,
    SessionData,
    SessionFormatError,
    SplitError,
    load_dataset,
    load_manifest,
    load_session,
    make_split,
    normalize_labels,
    prepare_sessions,
    select_blocks,
    write_manifest,
    write_session,
    zscore_block,
    zscore_session,
)


def make_block(block_id: int, ticks: int = 10, features: int = 3, seed: int = 0) -> Block:
    rng = np.random.default_rng(seed + block_id)
    return Block(
        block_id,
        rng.normal(size=(ticks, features)),
        rng.uniform(-1.0, 1.0, size=(ticks, 2)),
        np.arange(ticks) * 20,
    )


def make_session(session_index: int, blocks: int = 6, ticks: int = 10, features: int = 3) -> SessionData:
    return SessionData(
        session_index,
        session_index * 7,
        [make_block(block_id, ticks, features, seed=100 * session_index) for block_id in range(1, blocks + 1)],
    )


@pytest.fixture
def sessions():
    return [make_session(index) for index in range(5)]


def test_labeled_sample():
    sample = LabeledSample(np.array([1.0, 2.0]), (0.5, -0.5), 3, 40)

    assert sample.block_id == 3
    assert sample.tick_ms == 40
    assert sample == LabeledSample(np.array([1.0, 2.0]), (0.5, -0.5), 3, 40)
    assert sample != LabeledSample(np.array([1.0, 2.5]), (0.5, -0.5), 3, 40)
    with pytest.raises(ValueError):
        sample.features[0] = 5.0

    with pytest.raises(ValueError):
        LabeledSample(np.array([1.0]), (0.5, np.nan), 3, 40)
    with pytest.raises(ValueError):
        LabeledSample(np.array([1.0]), (0.5, 0.5), 3, 30)


def test_block():
    block = make_block(2, ticks=5)

    assert len(block) == 5
    assert block.feature_count == 3
    assert block[1] == LabeledSample(block.features[1], block.labels[1], 2, 20)
    assert [sample.tick_ms for sample in block] == [0, 20, 40, 60, 80]

    with pytest.raises(ValueError):
        Block(1, np.zeros((3, 2)), np.zeros((3, 2)), [0, 20, 60])
    with pytest.raises(ValueError):
        Block(1, np.zeros((3, 2)), np.zeros((2, 2)), [0, 20, 40])


def test_session_data():
    session = make_session(2, blocks=5)

    assert session.block_ids == [1, 2, 3, 4, 5]
    assert session.sample_count == 50
    assert session.block(3).block_id == 3
    assert session.all_labels().shape == (50, 2)
    with pytest.raises(KeyError):
        session.block(9)

    with pytest.raises(ValueError):
        SessionData(0, 0, [make_block(1), make_block(1)])
    with pytest.raises(ValueError):
        SessionData(0, 0, [make_block(1, features=3), make_block(2, features=4)])
    with pytest.raises(TypeError):
        SessionData(0, 0, [np.zeros(3)])


def test_session_round_trip(tmp_path):
    session = make_session(0, blocks=2, ticks=4)
    path = tmp_path / "session.csv"

    write_session(session, path)
    loaded = load_session(path, session_index=0, calendar_day=0)

    assert loaded.block_ids == session.block_ids
    for original, restored in zip(session.blocks, loaded.blocks):
        np.testing.assert_allclose(restored.features, original.features, rtol=1e-8)
        np.testing.assert_allclose(restored.labels, original.labels, rtol=1e-8)
        np.testing.assert_array_equal(restored.tick_ms, original.tick_ms)


def test_load_session_reports_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "block_id,tick_ms,label_dx,label_dy,f0,f1\n"
        "1,0,0.1,0.2,1.0,2.0\n"
        "1,20,0.1,0.2,1.0,2.0\n"
        "1,40,0.1,0.2,1.0\n"
    )

    with pytest.raises(SessionFormatError, match=r"row 4"):
        load_session(path)


def test_load_session_rejects_skipped_tick(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "block_id,tick_ms,label_dx,label_dy,f0\n"
        "1,0,0.1,0.2,1.0\n"
        "1,40,0.1,0.2,1.0\n"
    )

    with pytest.raises(SessionFormatError, match=r"row 3"):
        load_session(path)


def test_load_session_rejects_interleaved_blocks(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "block_id,tick_ms,label_dx,label_dy,f0\n"
        "1,0,0.1,0.2,1.0\n"
        "2,0,0.1,0.2,1.0\n"
        "1,20,0.1,0.2,1.0\n"
    )

    with pytest.raises(SessionFormatError, match=r"row 4: block 1 is not contiguous"):
        load_session(path)


def test_load_session_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("block,tick_ms,label_dx,label_dy,f0\n1,0,0.1,0.2,1.0\n")

    with pytest.raises(SessionFormatError, match=r"row 1"):
        load_session(path)


def test_manifest_round_trip(tmp_path):
    sessions = [make_session(0, blocks=5, ticks=3), make_session(1, blocks=5, ticks=3)]
    entries = []
    for session in sessions:
        path = tmp_path / "session_{}.csv".format(session.session_index)
        write_session(session, path)
        entries.append(ManifestEntry(session.session_index, session.calendar_day, path))
    write_manifest(entries, tmp_path / "manifest.csv")

    assert "session_0.csv" in (tmp_path / "manifest.csv").read_text()
    assert load_manifest(tmp_path / "manifest.csv") == entries

    loaded = load_dataset(tmp_path / "manifest.csv")
    assert [session.session_index for session in loaded] == [0, 1]
    assert [session.calendar_day for session in loaded] == [0, 7]


def test_zscore_block():
    rng = np.random.default_rng(4)
    features = rng.normal(3.0, 2.0, size=(200, 4))
    features[:, 2] = 5.0

    scored = zscore_block(features)

    np.testing.assert_allclose(scored.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(scored[:, [0, 1, 3]].std(axis=0), 1.0, rtol=1e-12)
    np.testing.assert_array_equal(scored[:, 2], 0.0)

    with pytest.raises(DegenerateBlockError):
        zscore_block(features[:1])


def test_zscore_session_is_per_block():
    session = make_session(0, blocks=5)
    shifted = session.replace(
        blocks=[block.with_features(block.features + 10.0 * block.block_id) for block in session.blocks]
    )

    scored = zscore_session(shifted)

    for original, block in zip(zscore_session(session).blocks, scored.blocks):
        np.testing.assert_allclose(block.features, original.features, atol=1e-9)


def test_normalize_labels():
    session = make_session(0, blocks=5)

    normalized = normalize_labels(session)

    assert normalized.label_scale == pytest.approx(np.percentile(np.abs(session.all_labels()), 99))
    assert np.percentile(np.abs(normalized.all_labels()), 99) == pytest.approx(1.0)


def test_normalize_labels_all_zero():
    blocks = [block.with_labels(np.zeros((len(block), 2))) for block in make_session(0, blocks=5).blocks]
    session = SessionData(0, 0, blocks)

    normalized = normalize_labels(session)

    assert normalized.label_scale == 1.0
    np.testing.assert_array_equal(normalized.all_labels(), 0.0)


def test_prepare_sessions(sessions):
    prepared = prepare_sessions(sessions)

    assert len(prepared) == len(sessions)
    for session in prepared:
        for block in session.blocks:
            np.testing.assert_allclose(block.features.mean(axis=0), 0.0, atol=1e-12)


def test_make_split(sessions):
    split = make_split(sessions, test_session=3, prior_sessions=2)

    assert split.test_blocks == (BlockRef(3, 5), BlockRef(3, 6))
    assert split.validation_blocks == (BlockRef(3, 3), BlockRef(3, 4))
    assert split.train_blocks[:2] == (BlockRef(3, 1), BlockRef(3, 2))
    assert {ref.session_index for ref in split.train_blocks[2:]} == {1, 2}
    assert len(split.train_blocks) == 2 + 2 * 6


def test_make_split_clips_prior_sessions(sessions):
    split = make_split(sessions, test_session=1, prior_sessions=10)

    assert {ref.session_index for ref in split.train_blocks} == {0, 1}


def test_make_split_five_blocks():
    split = make_split([make_session(0, blocks=5)], test_session=0, prior_sessions=0)

    assert split.train_blocks == (BlockRef(0, 1),)
    assert split.validation_blocks == (BlockRef(0, 2), BlockRef(0, 3))
    assert split.test_blocks == (BlockRef(0, 4), BlockRef(0, 5))


def test_make_split_errors(sessions):
    with pytest.raises(IneligibleSessionError):
        make_split([make_session(0, blocks=4)], test_session=0, prior_sessions=0)
    with pytest.raises(SplitError):
        make_split(sessions, test_session=42, prior_sessions=0)


def test_make_split_is_disjoint_and_test_blocks_are_never_trained(sessions):
    rng = np.random.default_rng(0)
    for _ in range(20):
        test_session = int(rng.integers(0, 5))
        split = make_split(sessions, test_session, int(rng.integers(0, 6)))

        train, validation, test = map(set, (split.train_blocks, split.validation_blocks, split.test_blocks))
        assert not (train & validation or train & test or validation & test)
        assert all(ref.session_index == test_session for ref in validation | test)
        assert all(ref.session_index <= test_session for ref in train)


def test_data_split_rejects_overlap():
    with pytest.raises(SplitError):
        DataSplit([BlockRef(0, 1)], [BlockRef(0, 1)], [BlockRef(0, 2)])


def test_select_blocks(sessions):
    blocks = select_blocks(sessions, [BlockRef(2, 4), BlockRef(0, 1)])

    assert blocks[0] is sessions[2].block(4)
    assert blocks[1] is sessions[0].block(1)
