"""Figure styling: one frozen value object consumed by every renderer."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Style:
    """Canvas geometry, palette and typography shared by all figures."""

    width: float = 640.0
    height: float = 360.0
    margin_left: float = 64.0
    margin_right: float = 24.0
    margin_top: float = 40.0
    margin_bottom: float = 48.0
    background: str = "#ffffff"
    frame_color: str = "#333333"
    grid_color: str = "#e8e8e8"
    text_color: str = "#222222"
    muted_color: str = "#666666"
    font_family: str = "Helvetica, Arial, sans-serif"
    font_size: float = 11.0
    title_size: float = 13.0
    line_width: float = 1.4
    dash: str = "6,4"
    # one distinct color per sweep row
    palette: tuple[str, ...] = (
        "#4361ee",
        "#e63946",
        "#2d6a4f",
        "#f77f00",
        "#7209b7",
        "#0096c7",
        "#b5179e",
        "#606c38",
        "#9d0208",
    )

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("canvas dimensions must be > 0")
        if not self.palette:
            raise ValueError("palette must not be empty")

    def color(self, i: int) -> str:
        return self.palette[i % len(self.palette)]


DEFAULT_STYLE = Style()
