import numpy as np
import pytest

from clic.imagecore import Image, save_png
from clic.manifest import Manifest, ManifestEntry

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: int(r[0].split(".")[0])):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def image_dir(tmp_path):
    """Writes images to disk and returns a manifest for them."""

    def make(images, names=None):
        entries = []
        for i, img in enumerate(images):
            name = names[i] if names else f"img{i:03d}"
            path = tmp_path / f"{name}.png"
            save_png(img, path)
            entries.append(ManifestEntry(str(path), None, name))
        return Manifest(entries)

    return make


def random_image(rng, h=32, w=32, c=3) -> Image:
    return Image(rng.random((h, w, c)))
