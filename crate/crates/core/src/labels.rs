//! Tissue taxonomy and per-face label fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class taxonomy. Ids are dense from 0 and double as mask palette indices.
///
/// The four tissue classes are sub-classes of the wound bed: a face labeled
/// `Granulation` is part of the wound bed. `WoundBed` on its own means wound
/// bed with unclassified tissue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Label {
    Background = 0,
    WoundBed = 1,
    Periwound = 2,
    Granulation = 3,
    Slough = 4,
    Necrotic = 5,
    Epithelial = 6,
}

impl Label {
    /// Number of classes `C`.
    pub const COUNT: usize = 7;

    pub const ALL: [Label; Label::COUNT] = [
        Label::Background,
        Label::WoundBed,
        Label::Periwound,
        Label::Granulation,
        Label::Slough,
        Label::Necrotic,
        Label::Epithelial,
    ];

    pub const TISSUES: [Label; 4] = [
        Label::Granulation,
        Label::Slough,
        Label::Necrotic,
        Label::Epithelial,
    ];

    pub fn from_id(id: u8) -> Result<Label> {
        Label::ALL
            .get(id as usize)
            .copied()
            .ok_or(Error::InvalidLabel(id))
    }

    #[inline]
    pub fn id(self) -> u8 {
        self as u8
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Background => "background",
            Label::WoundBed => "wound_bed",
            Label::Periwound => "periwound",
            Label::Granulation => "granulation",
            Label::Slough => "slough",
            Label::Necrotic => "necrotic",
            Label::Epithelial => "epithelial",
        }
    }

    pub fn is_tissue(self) -> bool {
        matches!(
            self,
            Label::Granulation | Label::Slough | Label::Necrotic | Label::Epithelial
        )
    }

    /// True for `WoundBed` and every tissue class.
    pub fn is_wound_bed(self) -> bool {
        self == Label::WoundBed || self.is_tissue()
    }

    /// Membership test used by region queries: querying `WoundBed` also
    /// matches the tissue classes nested inside it.
    pub fn belongs_to(self, class: Label) -> bool {
        if class == Label::WoundBed {
            self.is_wound_bed()
        } else {
            self == class
        }
    }

    /// Display color used for labeled mesh and mask previews.
    pub fn color(self) -> [u8; 3] {
        match self {
            Label::Background => [200, 200, 200],
            Label::WoundBed => [255, 255, 0],
            Label::Periwound => [0, 160, 255],
            Label::Granulation => [220, 20, 60],
            Label::Slough => [240, 200, 80],
            Label::Necrotic => [30, 30, 30],
            Label::Epithelial => [255, 170, 200],
        }
    }
}

/// One class label per mesh face.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelField {
    labels: Vec<Label>,
}

impl LabelField {
    pub fn new(labels: Vec<Label>) -> Self {
        LabelField { labels }
    }

    pub fn uniform(face_count: usize, label: Label) -> Self {
        LabelField {
            labels: vec![label; face_count],
        }
    }

    /// Builds a field from raw palette ids.
    pub fn from_ids(ids: &[u8]) -> Result<Self> {
        ids.iter()
            .map(|&id| Label::from_id(id))
            .collect::<Result<Vec<_>>>()
            .map(LabelField::new)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn get(&self, face: usize) -> Label {
        self.labels[face]
    }

    #[inline]
    pub fn set(&mut self, face: usize, label: Label) {
        self.labels[face] = label;
    }

    pub fn as_slice(&self) -> &[Label] {
        &self.labels
    }

    pub fn ids(&self) -> Vec<u8> {
        self.labels.iter().map(|l| l.id()).collect()
    }

    /// Faces whose label belongs to `class`, ascending.
    pub fn faces_of(&self, class: Label) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.belongs_to(class))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn mask_of(&self, class: Label) -> Vec<bool> {
        self.labels.iter().map(|l| l.belongs_to(class)).collect()
    }

    pub fn check_len(&self, faces: usize) -> Result<()> {
        if self.labels.len() != faces {
            return Err(Error::LabelCountMismatch {
                labels: self.labels.len(),
                faces,
            });
        }
        Ok(())
    }
}
