import cv2
import numpy as np
import pytest

from nilutkit.imagepipe import ImageRgb

MAX_SIDE = 512
CRITERIA: list[str] = []


def natural_corpus() -> list[ImageRgb]:
    """Eleven bundled photographs, downscaled so the long side is at most 512."""
    import skimage.data as sd
    from sklearn.datasets import load_sample_images

    left, right, _ = sd.stereo_motorcycle()
    arrays = {
        "astronaut": sd.astronaut(),
        "chelsea": sd.chelsea(),
        "coffee": sd.coffee(),
        "rocket": sd.rocket(),
        "hubble_deep_field": sd.hubble_deep_field(),
        "immunohistochemistry": sd.immunohistochemistry(),
        "retina": sd.retina(),
        "motorcycle_left": left,
        "motorcycle_right": right,
    }
    samples = load_sample_images()
    for path, img in zip(samples.filenames, samples.images):
        arrays[path.rsplit("/", 1)[-1].split(".")[0]] = img
    images = []
    for name, arr in arrays.items():
        h, w = arr.shape[:2]
        scale = MAX_SIDE / max(h, w)
        if scale < 1:
            arr = cv2.resize(arr, (round(w * scale), round(h * scale)), interpolation=cv2.INTER_AREA)
        images.append(ImageRgb(arr[..., :3].astype(np.float64) / 255.0, 8, name))
    return images


@pytest.fixture(scope="session")
def corpus():
    return natural_corpus()


def record_criterion(number: int, ok: bool, detail: str) -> None:
    CRITERIA.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
