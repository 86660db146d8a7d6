import pytest

import fashion_synth as fs


@pytest.fixture(scope="session")
def records():
    return fs.generate_dataset(16, seed=11, resolution=32)


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    fs.generate_dataset(16, seed=11, out_dir=out, resolution=32)
    return out


@pytest.fixture(scope="session")
def trained_dir(tmp_path_factory, records):
    """Shape + image checkpoints from a one-epoch micro-run."""
    out = tmp_path_factory.mktemp("ckpts")
    for stage in ("shape", "image"):
        cfg = fs.TrainConfig(stage=stage, epochs=1, batch_size=4,
                             resolution=32, seed=2, checkpoint_dir=str(out))
        fs.train_stage(cfg, records)
    return out


@pytest.fixture(scope="session")
def pipeline(trained_dir):
    return fs.Pipeline(trained_dir / "shape_final.zip",
                       trained_dir / "image_final.zip")
