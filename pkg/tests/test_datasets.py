import logging

import pytest
import torch

from src.data.datasets import TrainingStream, make_loader, records_for
from src.utils.exceptions import DataError, ParameterError

logger = logging.getLogger(__name__)


def test_records_for_split(synthetic_manifest):
    train = records_for(synthetic_manifest, "train")
    assert len(train) == 3
    assert all(clean is not None for _, clean in train)
    unpaired = records_for(synthetic_manifest, None, paired=False)
    assert len(unpaired) == 5 and all(clean is None for _, clean in unpaired)


def test_stream_items_are_pure_functions_of_index(synthetic_manifest):
    samples = records_for(synthetic_manifest, "train")
    a = TrainingStream(samples, length=6, crop=16, seed=3)
    b = TrainingStream(samples, length=6, crop=16, seed=3)
    for k in (5, 0, 3):
        assert torch.equal(a[k]["hazy"], b[k]["hazy"])
        assert torch.equal(a[k]["clean"], b[k]["clean"])
    assert a[0]["hazy"].shape == (3, 16, 16)


def test_loader_order_independent_of_workers(synthetic_manifest):
    stream = TrainingStream(records_for(synthetic_manifest, "train"), length=4, crop=8, seed=1)
    sequential = [batch["hazy"] for batch in make_loader(stream, batch=2, num_workers=0)]
    prefetched = [batch["hazy"] for batch in make_loader(stream, batch=2, num_workers=2)]
    assert len(sequential) == 2
    assert all(torch.equal(x, y) for x, y in zip(sequential, prefetched))


def test_unpaired_stream_has_no_clean(synthetic_manifest):
    stream = TrainingStream(records_for(synthetic_manifest, "train", paired=False), length=2, crop=0, seed=0)
    item = stream[1]
    assert set(item) == {"hazy"}
    assert item["hazy"].shape == (3, 32, 32)


def test_mixing_draws_from_both_pools(synthetic_manifest):
    train = records_for(synthetic_manifest, "train")
    val = records_for(synthetic_manifest, "val")
    stream = TrainingStream(train, length=64, crop=0, seed=0, use_augment=False, mix_samples=val, mix_ratio=0.5)
    val_hazy = stream.cache.get(val[0][0])
    hits = sum(torch.equal(stream[k]["hazy"], torch.from_numpy(val_hazy.transpose(2, 0, 1)).float()) for k in range(64))
    assert 0 < hits < 64


def test_stream_argument_errors(synthetic_manifest):
    samples = records_for(synthetic_manifest, "train")
    with pytest.raises(DataError):
        TrainingStream([], length=1, crop=0, seed=0)
    with pytest.raises(ParameterError):
        TrainingStream(samples, length=1, crop=0, seed=0, mix_ratio=1.5)
    with pytest.raises(DataError):
        TrainingStream(samples, length=1, crop=0, seed=0, mix_ratio=0.5)
    with pytest.raises(IndexError):
        TrainingStream(samples, length=1, crop=0, seed=0)[1]
