//! Spatial relations between the person and the object.
//!
//! Each relation is a closed-form predicate over the two masks. The
//! thresholds make the predicates pairwise exclusive for the shapes the
//! generator draws, and the generator rejects any placement that does not
//! satisfy exactly one of them.

use serde::{Deserialize, Serialize};

use crate::maskio::{BBox, Mask};

/// Vertical tolerance, in rows, for "touching" relations.
pub const CONTACT_TOLERANCE: isize = 1;
/// Minimum horizontal overlap (fraction of the narrower box) for vertical
/// relations.
pub const MIN_H_OVERLAP: f64 = 0.3;
/// Minimum vertical overlap (fraction of the shorter box) for side relations.
pub const MIN_V_OVERLAP: f64 = 0.5;
/// Rows strictly between the boxes for the gap relations.
pub const MIN_ROW_GAP: isize = 4;
/// Empty columns allowed between side-by-side boxes.
pub const MAX_SIDE_CONTACT_GAP: isize = 2;
pub const MIN_SIDE_GAP: isize = 6;
/// Fraction of object pixels covered by the person.
pub const MAJOR_OVERLAP: f64 = 0.5;
pub const MINOR_OVERLAP: f64 = 0.1;
pub const MIN_DIAGONAL_COL_GAP: isize = 3;
pub const MIN_DIAGONAL_ROW_GAP: isize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationKind {
    /// Person stands on the object: person bottom touches object top.
    AboveContact,
    /// Object rests on the person: object bottom touches person top.
    BeneathContact,
    /// Person above the object with a clear vertical gap.
    AboveGap,
    /// Object above the person with a clear vertical gap.
    BeneathGap,
    /// Side by side, at most two empty columns apart.
    AdjacentSide,
    /// Side by side with a wide gap.
    SideGap,
    /// At least half of the object lies inside the person.
    OverlapMajor,
    /// Between a tenth and a half of the object lies inside the person.
    OverlapMinor,
    /// Separated along both axes.
    Diagonal,
}

impl RelationKind {
    pub const ALL: [RelationKind; 9] = [
        RelationKind::AboveContact,
        RelationKind::BeneathContact,
        RelationKind::AboveGap,
        RelationKind::BeneathGap,
        RelationKind::AdjacentSide,
        RelationKind::SideGap,
        RelationKind::OverlapMajor,
        RelationKind::OverlapMinor,
        RelationKind::Diagonal,
    ];

    pub fn holds(self, person: &Mask, object: &Mask) -> bool {
        match Geometry::measure(person, object) {
            Some(g) => g.satisfies(self),
            None => false,
        }
    }
}

/// The measurements every predicate is built from.
#[derive(Clone, Copy, Debug)]
pub struct Geometry {
    pub person: BBox,
    pub object: BBox,
    pub h_overlap: f64,
    pub v_overlap: f64,
    /// Empty columns between the boxes, -1 if their columns overlap.
    pub col_gap: isize,
    /// Empty rows between the boxes, -1 if their rows overlap.
    pub row_gap: isize,
    /// Fraction of object pixels also in the person mask.
    pub covered: f64,
}

fn overlap(a0: usize, a1: usize, b0: usize, b1: usize) -> usize {
    (a1.min(b1) + 1).saturating_sub(a0.max(b0))
}

fn gap(a0: usize, a1: usize, b0: usize, b1: usize) -> isize {
    if b0 > a1 {
        (b0 - a1 - 1) as isize
    } else if a0 > b1 {
        (a0 - b1 - 1) as isize
    } else {
        -1
    }
}

impl Geometry {
    pub fn measure(person: &Mask, object: &Mask) -> Option<Geometry> {
        let (p, o) = (person.bbox()?, object.bbox()?);
        let h = overlap(p.left, p.right, o.left, o.right) as f64 / p.width().min(o.width()) as f64;
        let v =
            overlap(p.top, p.bottom, o.top, o.bottom) as f64 / p.height().min(o.height()) as f64;
        Some(Geometry {
            person: p,
            object: o,
            h_overlap: h,
            v_overlap: v,
            col_gap: gap(p.left, p.right, o.left, o.right),
            row_gap: gap(p.top, p.bottom, o.top, o.bottom),
            covered: person.intersection_count(object) as f64 / object.count() as f64,
        })
    }

    pub fn satisfies(&self, kind: RelationKind) -> bool {
        let (p, o) = (self.person, self.object);
        let touching = self.covered < MINOR_OVERLAP && self.h_overlap >= MIN_H_OVERLAP;
        match kind {
            RelationKind::AboveContact => {
                touching && (o.top as isize - p.bottom as isize).abs() <= CONTACT_TOLERANCE
            }
            RelationKind::BeneathContact => {
                touching && (p.top as isize - o.bottom as isize).abs() <= CONTACT_TOLERANCE
            }
            RelationKind::AboveGap => {
                self.h_overlap >= MIN_H_OVERLAP && o.top as isize - p.bottom as isize > MIN_ROW_GAP
            }
            RelationKind::BeneathGap => {
                self.h_overlap >= MIN_H_OVERLAP && p.top as isize - o.bottom as isize > MIN_ROW_GAP
            }
            RelationKind::AdjacentSide => {
                (0..=MAX_SIDE_CONTACT_GAP).contains(&self.col_gap)
                    && self.v_overlap >= MIN_V_OVERLAP
            }
            RelationKind::SideGap => {
                self.col_gap >= MIN_SIDE_GAP && self.v_overlap >= MIN_V_OVERLAP
            }
            RelationKind::OverlapMajor => self.covered >= MAJOR_OVERLAP,
            RelationKind::OverlapMinor => (MINOR_OVERLAP..MAJOR_OVERLAP).contains(&self.covered),
            RelationKind::Diagonal => {
                self.col_gap >= MIN_DIAGONAL_COL_GAP && self.row_gap >= MIN_DIAGONAL_ROW_GAP
            }
        }
    }

    /// All relations that hold.
    pub fn relations(&self) -> Vec<RelationKind> {
        RelationKind::ALL
            .into_iter()
            .filter(|&k| self.satisfies(k))
            .collect()
    }
}
