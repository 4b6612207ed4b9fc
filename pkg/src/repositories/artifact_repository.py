import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from src.core.exceptions import InvalidArgumentException, NotFoundException
from src.physics.measure import DataVector, GridLayout, PhaseGrid

PathLike = Union[str, Path]
DATA_HEADER = ("re", "im", "value")


def format_float(value: float) -> str:
    """Shortest text that round-trips a double exactly."""
    return format(float(value), ".17g")


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


class ArtifactRepository:
    """
    Repository for files produced by the engine.

    All paths are resolved against ``root``. Writers create parent
    directories; readers raise `NotFoundException` for missing files.
    """

    def __init__(self, root: PathLike = ".") -> None:
        self.root = Path(root)

    def resolve(self, relative: PathLike) -> Path:
        path = Path(relative)
        return path if path.is_absolute() else self.root / path

    def _target(self, relative: PathLike) -> Path:
        path = self.resolve(relative)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def _existing(self, relative: PathLike, what: str) -> Path:
        path = self.resolve(relative)
        if not path.exists():
            raise NotFoundException(what, str(path))
        return path

    # -------------------------------------------------------------------------
    # Data vectors
    # -------------------------------------------------------------------------

    def write_data(self, relative: PathLike, data: DataVector) -> Path:
        """
        Write ``re,im,value`` rows, one per grid point, with 17 significant digits.

        Raises:
            InvalidArgumentException: If the data carries no grid
        """
        if data.grid is None:
            raise InvalidArgumentException("data without a grid cannot be written as CSV")
        path = self._target(relative)
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(DATA_HEADER)
            for beta, value in zip(data.grid.points, data.values):
                writer.writerow((format_float(beta.real), format_float(beta.imag), format_float(value)))
        return path

    def read_data(self, relative: PathLike, grid: Optional[PhaseGrid] = None) -> DataVector:
        """
        Read a data CSV back into a `DataVector`.

        Without an explicit ``grid`` the points are taken from the file as a
        scatter grid; pass the original grid to keep square-grid metadata.
        """
        path = self._existing(relative, "data file")
        with open(path, newline="") as handle:
            reader = csv.reader(handle)
            header = tuple(next(reader, ()))
            if header != DATA_HEADER:
                raise InvalidArgumentException(f"{path} is not a data CSV (header {header})")
            rows = [(float(re), float(im), float(value)) for re, im, value in reader]
        table = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
        points = table[:, 0] + 1j * table[:, 1]
        if grid is None:
            grid = PhaseGrid(points=points, layout=GridLayout.SCATTER)
        elif len(grid) != len(points) or not np.allclose(grid.points, points, atol=1e-12):
            raise InvalidArgumentException(f"{path} does not match the expected grid")
        return DataVector(values=table[:, 2], grid=grid, metadata={"path": str(path)})

    # -------------------------------------------------------------------------
    # Tables and documents
    # -------------------------------------------------------------------------

    def write_table(self, relative: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self._target(relative)
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
        return path

    def read_table(self, relative: PathLike) -> tuple[list[str], list[list[str]]]:
        path = self._existing(relative, "table")
        with open(path, newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, [])
            return header, [row for row in reader]

    def write_matrix(self, relative: PathLike, matrix: np.ndarray) -> Path:
        """Square real matrix (confusion matrices) as CSV without a header."""
        path = self._target(relative)
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            for row in np.asarray(matrix, dtype=np.float64):
                writer.writerow([format_float(v) for v in row])
        return path

    def write_json(self, relative: PathLike, document: Union[BaseModel, dict, list]) -> Path:
        if isinstance(document, BaseModel):
            document = document.model_dump(mode="json")
        path = self._target(relative)
        path.write_text(json.dumps(document, sort_keys=True, indent=2) + "\n")
        return path

    def read_json(self, relative: PathLike) -> Any:
        path = self._existing(relative, "json document")
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InvalidArgumentException(f"{path} is not valid JSON: {exc}") from exc

    # -------------------------------------------------------------------------
    # Rasters
    # -------------------------------------------------------------------------

    def write_pgm(self, relative: PathLike, image: np.ndarray, metadata: Optional[dict] = None) -> Path:
        """
        8-bit binary PGM (P5) with a JSON sidecar recording the value range.

        Values are mapped linearly from ``[min, max]`` onto ``[0, 255]``;
        row 0 of the array is the top row of the raster.
        """
        image = np.asarray(image, dtype=np.float64)
        if image.ndim != 2:
            raise InvalidArgumentException(f"a raster needs a 2D array, got shape {image.shape}")
        low, high = float(image.min()), float(image.max())
        span = high - low
        scaled = np.zeros_like(image) if span <= 0 else (image - low) / span
        pixels = np.rint(scaled * 255.0).astype(np.uint8)

        path = self._target(relative)
        height, width = pixels.shape
        path.write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes())
        sidecar = {"min": low, "max": high, "width": width, "height": height, **(metadata or {})}
        self.write_json(path.with_suffix(path.suffix + ".json"), sidecar)
        return path

    def read_pgm(self, relative: PathLike) -> np.ndarray:
        """Raw 8-bit pixels of a P5 raster."""
        payload = self._existing(relative, "raster").read_bytes()
        parts = payload.split(maxsplit=4)
        if len(parts) < 4 or parts[0] != b"P5":
            raise InvalidArgumentException("not a binary PGM raster")
        width, height, depth = int(parts[1]), int(parts[2]), int(parts[3])
        if depth != 255:
            raise InvalidArgumentException(f"unsupported PGM depth {depth}")
        pixels = payload[len(payload) - width * height:]
        return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width)
