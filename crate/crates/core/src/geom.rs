use serde::{Deserialize, Serialize};

/// Milliseconds since the start of a stream.
pub type Millis = u64;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Rotates `self` about `pivot` by `deg` degrees (counter-clockwise in a
    /// y-up frame, which reads clockwise on a y-down image).
    pub fn rotate_about(self, pivot: Point, deg: f64) -> Point {
        let (s, c) = deg.to_radians().sin_cos();
        let dx = self.x - pivot.x;
        let dy = self.y - pivot.y;
        Point::new(pivot.x + dx * c - dy * s, pivot.y + dx * s + dy * c)
    }
}

/// Axis-aligned rectangle in screen pixels. Containment is half-open so that
/// abutting rectangles never share a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.x < self.x + self.w && p.y >= self.y && p.y < self.y + self.h
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }

    pub fn centre(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn inside(&self, screen: ScreenSize) -> bool {
        self.x >= 0.0
            && self.y >= 0.0
            && self.x + self.w <= screen.w as f64
            && self.y + self.h <= screen.h as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenSize {
    pub w: u32,
    pub h: u32,
}

impl ScreenSize {
    pub const fn new(w: u32, h: u32) -> Self {
        Self { w, h }
    }

    pub fn centre(&self) -> Point {
        Point::new(self.w as f64 / 2.0, self.h as f64 / 2.0)
    }

    /// Clamps `p` into the screen; the flag is true when clamping moved it.
    pub fn clamp(&self, p: Point) -> (Point, bool) {
        let max_x = (self.w as f64 - 1.0).max(0.0);
        let max_y = (self.h as f64 - 1.0).max(0.0);
        let c = Point::new(p.x.clamp(0.0, max_x), p.y.clamp(0.0, max_y));
        (c, c != p)
    }
}

impl Default for ScreenSize {
    fn default() -> Self {
        Self::new(1024, 768)
    }
}
