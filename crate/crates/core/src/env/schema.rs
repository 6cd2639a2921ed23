//! Multi-modal observation schema with a configurable desk scale.

use crate::error::{Error, Result};

/// Per-category extents of one hero's observation.
///
/// At scale 1 the extents match the full game schema: image 6x17x17,
/// heroes 6x251, current-hero 44, soldiers 20x25, turrets 6x29,
/// monsters 20x28, whole-info 68 (per-hero total 4586). Feature dims scale
/// as max(1, round(dim*scale)); unit counts and the image grid never scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSchema {
    pub scale: f64,
    /// channels, height, width — fixed regardless of scale
    pub image: (usize, usize, usize),
    /// unit count, feature dim
    pub heroes: (usize, usize),
    pub current_hero: usize,
    pub soldiers: (usize, usize),
    pub turrets: (usize, usize),
    pub monsters: (usize, usize),
    pub whole_info: usize,
}

pub const HEROES_PER_TEAM: usize = 3;
/// Frames per episode segment; the teacher LSTM state resets at boundaries.
pub const EPISODE_LEN: usize = 16;

fn scaled(dim: usize, scale: f64) -> usize {
    ((dim as f64 * scale).round() as usize).max(1)
}

/// Builds the schema at the given scale factor in (0, 1].
pub fn make_schema(scale: f64) -> Result<ObservationSchema> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::InvalidArgument(format!("scale must be in (0,1], got {scale}")));
    }
    Ok(ObservationSchema {
        scale,
        image: (6, 17, 17),
        heroes: (6, scaled(251, scale)),
        current_hero: scaled(44, scale),
        soldiers: (20, scaled(25, scale)),
        turrets: (6, scaled(29, scale)),
        monsters: (20, scaled(28, scale)),
        whole_info: scaled(68, scale),
    })
}

impl ObservationSchema {
    pub fn image_len(&self) -> usize {
        self.image.0 * self.image.1 * self.image.2
    }

    /// Flat layout offsets of the categories inside one hero's observation:
    /// image, heroes, current, soldiers, turrets, monsters, whole.
    pub fn offsets(&self) -> CategoryOffsets {
        let image = 0;
        let heroes = image + self.image_len();
        let current = heroes + self.heroes.0 * self.heroes.1;
        let soldiers = current + self.current_hero;
        let turrets = soldiers + self.soldiers.0 * self.soldiers.1;
        let monsters = turrets + self.turrets.0 * self.turrets.1;
        let whole = monsters + self.monsters.0 * self.monsters.1;
        CategoryOffsets { image, heroes, current, soldiers, turrets, monsters, whole }
    }

    pub fn per_hero_total(&self) -> usize {
        self.offsets().whole + self.whole_info
    }

    pub fn group_total(&self) -> usize {
        HEROES_PER_TEAM * self.per_hero_total()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CategoryOffsets {
    pub image: usize,
    pub heroes: usize,
    pub current: usize,
    pub soldiers: usize,
    pub turrets: usize,
    pub monsters: usize,
    pub whole: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_one_matches_full_schema() {
        let s = make_schema(1.0).unwrap();
        assert_eq!(s.image, (6, 17, 17));
        assert_eq!(s.heroes, (6, 251));
        assert_eq!(s.current_hero, 44);
        assert_eq!(s.soldiers, (20, 25));
        assert_eq!(s.turrets, (6, 29));
        assert_eq!(s.monsters, (20, 28));
        assert_eq!(s.whole_info, 68);
        assert_eq!(s.per_hero_total(), 4586);
        assert_eq!(s.group_total(), 13758);
    }

    #[test]
    fn quarter_scale_rounds_feature_dims_only() {
        let s = make_schema(0.25).unwrap();
        assert_eq!(s.heroes, (6, 63)); // round(251 * 0.25)
        assert_eq!(s.image, (6, 17, 17)); // spatial grid kept
        assert_eq!(s.soldiers.0, 20);
        assert_eq!(s.turrets.0, 6);
        assert_eq!(s.monsters.0, 20);
    }

    #[test]
    fn out_of_range_scale_rejected() {
        assert!(make_schema(0.0).is_err());
        assert!(make_schema(1.5).is_err());
        assert!(make_schema(-0.1).is_err());
    }

    #[test]
    fn every_extent_at_least_one() {
        let s = make_schema(0.01).unwrap();
        assert!(s.heroes.1 >= 1);
        assert!(s.current_hero >= 1);
        assert!(s.soldiers.1 >= 1);
        assert!(s.whole_info >= 1);
    }
}
