import pytest

from geofuse.manifest import CLASS_ORDER, ClassLabel, Manifest, SampleRecord
from geofuse.synth import SynthConfig, generate_corpus

# populated by the acceptance suite's criterion() context manager
ACCEPTANCE_RESULTS: list[tuple[int, str, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for number, name, status in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(f"ACCEPTANCE {number:02d} {name}: {status}")

# Class counts from the source corpus; test supports at 0.30 follow from them.
REFERENCE_COUNTS = {
    ClassLabel.WND: 296,
    ClassLabel.SUN: 707,
    ClassLabel.BIT: 118,
    ClassLabel.NG: 765,
    ClassLabel.WAT: 376,
}
REFERENCE_TEST_SUPPORTS = {
    ClassLabel.WND: 89,
    ClassLabel.SUN: 212,
    ClassLabel.BIT: 35,
    ClassLabel.NG: 230,
    ClassLabel.WAT: 113,
}


def make_manifest(counts: dict[ClassLabel, int], with_masks: bool = False) -> Manifest:
    """In-memory manifest with fake paths, ``counts`` records per class."""
    records = []
    for label in CLASS_ORDER:
        for i in range(counts.get(label, 0)):
            records.append(
                SampleRecord(
                    image_path=f"images/{label.name}_{i:05d}.png",
                    mask_path=f"masks/{label.name}_{i:05d}.png" if with_masks else None,
                    label=label,
                )
            )
    return Manifest(records=tuple(records), source_id="memory")


@pytest.fixture(scope="session")
def reference_manifest() -> Manifest:
    return make_manifest(REFERENCE_COUNTS)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory) -> Manifest:
    """Small on-disk synthetic corpus shared by unit tests (4 per class, 64 px)."""
    out = tmp_path_factory.mktemp("tiny_corpus")
    return generate_corpus(out, SynthConfig(per_class=4, image_size=64, seed=11))
