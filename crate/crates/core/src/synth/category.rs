use alloc::vec::Vec;

use crate::math::Vec3;

/// The six object categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Bottle,
    Bowl,
    Can,
    Laptop,
    Mug,
    Camera,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Bottle,
        Category::Bowl,
        Category::Can,
        Category::Laptop,
        Category::Mug,
        Category::Camera,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Category> {
        Category::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Bottle => "bottle",
            Category::Bowl => "bowl",
            Category::Can => "can",
            Category::Laptop => "laptop",
            Category::Mug => "mug",
            Category::Camera => "camera",
        }
    }

    pub fn from_name(name: &str) -> Option<Category> {
        Category::ALL.iter().copied().find(|c| c.name() == name)
    }

    pub fn symmetry(self) -> Symmetry {
        match self {
            Category::Bottle | Category::Bowl | Category::Can => Symmetry::Revolution,
            Category::Mug => Symmetry::Mirror,
            Category::Laptop | Category::Camera => Symmetry::None,
        }
    }

    /// One-hot category vector.
    pub fn one_hot(self) -> [f64; 6] {
        let mut v = [0.0; 6];
        v[self as usize] = 1.0;
        v
    }
}

/// Shape symmetry of a category about its canonical up (z) axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    /// Invariant under every rotation about the up axis.
    Revolution,
    /// Reflection-symmetric about the plane spanned by the up axis and the
    /// canonical x axis.
    Mirror,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
}

impl ParamRange {
    pub const fn new(min: f64, max: f64) -> Self {
        ParamRange { min, max }
    }

    pub fn lerp(&self, u: f64) -> f64 {
        self.min + (self.max - self.min) * u
    }

    pub fn mid(&self) -> f64 {
        self.lerp(0.5)
    }
}

/// Shape-parameter ranges and mean size for one category.
#[derive(Debug, Clone, PartialEq)]
pub struct CategorySpec {
    pub category: Category,
    pub symmetry: Symmetry,
    pub mean_size: Vec3,
    pub ranges: Vec<(&'static str, ParamRange)>,
}

impl CategorySpec {
    pub fn new(category: Category) -> Self {
        let ranges = default_ranges(category);
        let mut spec =
            CategorySpec { category, symmetry: category.symmetry(), mean_size: [0.0; 3], ranges };
        spec.mean_size = super::shape::mean_instance_size(&spec);
        spec
    }

    pub fn range(&self, name: &str) -> ParamRange {
        self.ranges
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, r)| *r)
            .unwrap_or(ParamRange::new(0.0, 0.0))
    }
}

fn default_ranges(category: Category) -> Vec<(&'static str, ParamRange)> {
    let r = ParamRange::new;
    match category {
        Category::Bottle => alloc::vec![
            ("radius", r(0.030, 0.042)),
            ("height", r(0.18, 0.26)),
            ("shoulder", r(0.55, 0.68)),
            ("neck_start", r(0.76, 0.84)),
            ("neck_radius", r(0.28, 0.40)),
        ],
        Category::Bowl => alloc::vec![
            ("radius", r(0.060, 0.085)),
            ("height", r(0.045, 0.070)),
            ("base", r(0.40, 0.55)),
            ("wall", r(0.004, 0.004)),
        ],
        Category::Can => alloc::vec![("radius", r(0.028, 0.042)), ("height", r(0.09, 0.13))],
        Category::Laptop => alloc::vec![
            ("width", r(0.28, 0.36)),
            ("depth", r(0.19, 0.25)),
            ("base_thickness", r(0.012, 0.018)),
            ("screen_ratio", r(0.85, 1.0)),
            ("screen_thickness", r(0.006, 0.009)),
            ("opening_deg", r(95.0, 125.0)),
        ],
        Category::Mug => alloc::vec![
            ("radius", r(0.036, 0.048)),
            ("height", r(0.080, 0.110)),
            ("wall", r(0.004, 0.004)),
            ("bottom", r(0.006, 0.006)),
            ("handle_radius", r(0.020, 0.028)),
            ("handle_tube", r(0.005, 0.007)),
            ("handle_height", r(0.45, 0.55)),
        ],
        Category::Camera => alloc::vec![
            ("width", r(0.09, 0.13)),
            ("depth", r(0.06, 0.08)),
            ("height", r(0.06, 0.09)),
            ("lens_radius", r(0.020, 0.028)),
            ("lens_length", r(0.03, 0.06)),
            ("finder_height", r(0.012, 0.02)),
        ],
    }
}
