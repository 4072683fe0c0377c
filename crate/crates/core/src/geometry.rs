//! Screen geometry and gaze-to-hyperlink assignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperlink identifier, 1-based in document order.
pub type LinkId = u32;

/// Default maximum distance (pixels) at which a gaze point is still assigned to a link.
pub const ASSIGN_THRESHOLD_PX: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn translate(self, dx: f64, dy: f64) -> Self {
        Point::new(self.x + dx, self.y + dy)
    }
}

/// Axis-aligned closed rectangle in screen pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Result<Self> {
        let b = BoundingBox { left, top, width, height };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.left, self.top, self.width, self.height].iter().all(|v| v.is_finite());
        if !finite || self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::InvalidLayout(format!("degenerate box {self:?}")));
        }
        Ok(())
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn center(&self) -> Point {
        Point::new(self.left + 0.5 * self.width, self.top + 0.5 * self.height)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.left && p.x <= self.right() && p.y >= self.top && p.y <= self.bottom()
    }

    pub fn translate(self, dx: f64, dy: f64) -> Self {
        BoundingBox { left: self.left + dx, top: self.top + dy, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperlink {
    pub id: LinkId,
    #[serde(flatten)]
    pub bbox: BoundingBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Selectable links of one page plus the screen they are shown on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageLayout {
    /// `[width, height]` in pixels.
    pub screen: [f64; 2],
    pub links: Vec<Hyperlink>,
}

impl PageLayout {
    /// Builds a layout from boxes, numbering links 1..=M in the given order.
    pub fn from_boxes(screen: (f64, f64), boxes: impl IntoIterator<Item = BoundingBox>) -> Result<Self> {
        let links = boxes
            .into_iter()
            .enumerate()
            .map(|(i, bbox)| Hyperlink { id: i as LinkId + 1, bbox, label: None })
            .collect();
        let layout = PageLayout { screen: [screen.0, screen.1], links };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.links.is_empty() {
            return Err(Error::EmptyLayout);
        }
        if !(self.screen[0] > 0.0 && self.screen[1] > 0.0) {
            return Err(Error::InvalidLayout("screen dimensions must be positive".into()));
        }
        for (i, link) in self.links.iter().enumerate() {
            if link.id != i as LinkId + 1 {
                return Err(Error::InvalidLayout(format!(
                    "link ids must be 1..=M in order; position {} has id {}",
                    i + 1,
                    link.id
                )));
            }
            link.bbox.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn screen_width(&self) -> f64 {
        self.screen[0]
    }

    pub fn screen_height(&self) -> f64 {
        self.screen[1]
    }

    pub fn link(&self, id: LinkId) -> Option<&Hyperlink> {
        (id as usize).checked_sub(1).and_then(|i| self.links.get(i))
    }

    pub fn contains_id(&self, id: LinkId) -> bool {
        id >= 1 && (id as usize) <= self.links.len()
    }
}

/// Chebyshev distance from `g` to the closest point of the closed box.
///
/// Equal to `min over (x, y) in box of max(|gx - x|, |gy - y|)`: the two axes
/// decouple, so the minimum is the larger of the per-axis clamped distances.
pub fn box_distance(g: Point, b: &BoundingBox) -> f64 {
    let dx = (b.left - g.x).max(g.x - b.right()).max(0.0);
    let dy = (b.top - g.y).max(g.y - b.bottom()).max(0.0);
    dx.max(dy)
}

/// Closest link within `threshold` pixels; ties go to the lowest id.
pub fn assign_gaze(g: Point, layout: &PageLayout, threshold: f64) -> Option<LinkId> {
    let mut best: Option<(LinkId, f64)> = None;
    for link in &layout.links {
        let d = box_distance(g, &link.bbox);
        if d <= threshold && best.is_none_or(|(_, bd)| d < bd) {
            best = Some((link.id, d));
        }
    }
    best.map(|(id, _)| id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_box() -> BoundingBox {
        BoundingBox::new(100.0, 100.0, 200.0, 50.0).unwrap()
    }

    #[test]
    fn distance_examples() {
        let b = reference_box();
        assert_eq!(box_distance(Point::new(150.0, 120.0), &b), 0.0);
        assert_eq!(box_distance(Point::new(340.0, 120.0), &b), 40.0);
        assert_eq!(box_distance(Point::new(310.0, 160.0), &b), 10.0);
        // boundary is part of the box
        assert_eq!(box_distance(Point::new(300.0, 150.0), &b), 0.0);
    }

    #[test]
    fn degenerate_boxes_are_rejected() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 5.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 5.0, -1.0).is_err());
        assert!(BoundingBox::new(f64::NAN, 0.0, 5.0, 1.0).is_err());
    }

    #[test]
    fn assignment_threshold_and_ties() {
        let layout = PageLayout::from_boxes(
            (1280.0, 1024.0),
            [
                BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
                BoundingBox::new(20.0, 0.0, 10.0, 10.0).unwrap(),
                BoundingBox::new(200.0, 200.0, 10.0, 10.0).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(assign_gaze(Point::new(205.0, 205.0), &layout, 40.0), Some(3));
        // equidistant (5 px) from links 1 and 2
        assert_eq!(assign_gaze(Point::new(15.0, 5.0), &layout, 40.0), Some(1));
        // 41 px from link 3, far from the others
        assert_eq!(assign_gaze(Point::new(251.0, 205.0), &layout, 40.0), None);
        assert_eq!(assign_gaze(Point::new(250.0, 205.0), &layout, 40.0), Some(3));
    }

    #[test]
    fn layout_ids_must_be_contiguous() {
        let mut layout =
            PageLayout::from_boxes((100.0, 100.0), [BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap()]).unwrap();
        layout.links[0].id = 2;
        assert!(layout.validate().is_err());
        layout.links.clear();
        assert!(matches!(layout.validate(), Err(Error::EmptyLayout)));
    }
}
