//! Hierarchical action space constants: head extents, the button-target
//! legality matrix, and the sub-action activation map.

pub const BUTTON_DIM: usize = 13;
pub const MOVE_DIM: usize = 25;
pub const OFFSET_DIM: usize = 42;
pub const TARGET_DIM: usize = 39;
pub const TARGET_CATEGORIES: usize = 7;
pub const HEAD_COUNT: usize = 5;

/// Head extents in record order: button, move, offset-x, offset-z, target.
pub const HEAD_DIMS: [usize; HEAD_COUNT] = [BUTTON_DIM, MOVE_DIM, OFFSET_DIM, OFFSET_DIM, TARGET_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Button {
    NoOp0 = 0,
    NoOp1 = 1,
    Move = 2,
    NormalAttack = 3,
    Skill1 = 4,
    Skill2 = 5,
    Skill3 = 6,
    Skill4 = 7,
    ChosenSkill = 8,
    Recall = 9,
    EquipmentSkill = 10,
    HealSkill = 11,
    FriendSkill = 12,
}

pub const BUTTON_NAMES: [&str; BUTTON_DIM] = [
    "noop0",
    "noop1",
    "move",
    "normal_attack",
    "skill1",
    "skill2",
    "skill3",
    "skill4",
    "chosen_skill",
    "recall",
    "equipment_skill",
    "heal_skill",
    "friend_skill",
];

/// Target category order and extents; they sum to 39.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetCategory {
    None = 0,
    EnemyHeroes = 1,
    FriendHeroes = 2,
    SelfHero = 3,
    Monster = 4,
    Soldier = 5,
    Turret = 6,
}

pub const TARGET_CATEGORY_EXTENTS: [usize; TARGET_CATEGORIES] = [1, 3, 3, 1, 20, 10, 1];

/// Start slot of each category within the 39-wide target head.
pub const fn target_category_offsets() -> [usize; TARGET_CATEGORIES] {
    let mut offs = [0usize; TARGET_CATEGORIES];
    let mut acc = 0;
    let mut i = 0;
    while i < TARGET_CATEGORIES {
        offs[i] = acc;
        acc += TARGET_CATEGORY_EXTENTS[i];
        i += 1;
    }
    offs
}

/// Which sub-action heads a chosen button activates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Activation {
    pub move_dir: bool,
    pub offset_x: bool,
    pub offset_z: bool,
    pub target: bool,
}

const A_NONE: Activation = Activation { move_dir: false, offset_x: false, offset_z: false, target: false };
const A_MOVE: Activation = Activation { move_dir: true, offset_x: false, offset_z: false, target: false };
const A_TARGET: Activation = Activation { move_dir: false, offset_x: false, offset_z: false, target: true };
const A_SKILL: Activation = Activation { move_dir: false, offset_x: true, offset_z: true, target: true };

/// Button -> activated sub-heads. Move activates only directional control;
/// Normal Attack only target selection; both no-ops activate nothing.
pub const ACTIVATION_MAP: [Activation; BUTTON_DIM] = [
    A_NONE,   // noop0
    A_NONE,   // noop1
    A_MOVE,   // move
    A_TARGET, // normal attack
    A_SKILL,  // skill1
    A_SKILL,  // skill2
    A_SKILL,  // skill3
    A_SKILL,  // skill4
    A_SKILL,  // chosen skill
    A_NONE,   // recall
    A_NONE,   // equipment skill
    A_TARGET, // heal skill
    A_TARGET, // friend skill
];

const R_NONE: [bool; TARGET_CATEGORIES] = [true, false, false, false, false, false, false];
const R_EMPTY: [bool; TARGET_CATEGORIES] = [false; TARGET_CATEGORIES];
const R_ATTACK: [bool; TARGET_CATEGORIES] = [false, true, false, false, true, true, true];
const R_OFFENSIVE: [bool; TARGET_CATEGORIES] = [false, true, false, true, true, true, true];
const R_FRIENDLY: [bool; TARGET_CATEGORIES] = [false, false, true, true, false, false, false];

/// The 13x7 button-target legality matrix. The Move row activates no target
/// category; Normal Attack may target enemy heroes, monsters, soldiers and
/// turrets; offensive skills add self-cast; heal/friend skills are
/// friendly-only; no-ops, recall and the equipment skill resolve to "none".
pub const LEGALITY_MATRIX: [[bool; TARGET_CATEGORIES]; BUTTON_DIM] = [
    R_NONE,      // noop0
    R_NONE,      // noop1
    R_EMPTY,     // move
    R_ATTACK,    // normal attack
    R_OFFENSIVE, // skill1
    R_OFFENSIVE, // skill2
    R_OFFENSIVE, // skill3
    R_OFFENSIVE, // skill4
    R_OFFENSIVE, // chosen skill
    R_NONE,      // recall
    R_NONE,      // equipment skill
    R_FRIENDLY,  // heal skill
    R_FRIENDLY,  // friend skill
];

/// Expands a legality-matrix row to the 39 target slots (no visibility cut).
pub fn expand_legality_row(button: usize) -> [bool; TARGET_DIM] {
    let mut out = [false; TARGET_DIM];
    let offs = target_category_offsets();
    for cat in 0..TARGET_CATEGORIES {
        if LEGALITY_MATRIX[button][cat] {
            for s in 0..TARGET_CATEGORY_EXTENTS[cat] {
                out[offs[cat] + s] = true;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_extents_sum_to_39() {
        assert_eq!(TARGET_CATEGORY_EXTENTS.iter().sum::<usize>(), TARGET_DIM);
        let offs = target_category_offsets();
        assert_eq!(offs, [0, 1, 4, 7, 8, 28, 38]);
    }

    #[test]
    fn move_row_activates_no_target_category() {
        assert_eq!(expand_legality_row(Button::Move as usize), [false; TARGET_DIM]);
        assert!(ACTIVATION_MAP[Button::Move as usize].move_dir);
        assert!(!ACTIVATION_MAP[Button::Move as usize].target);
    }

    #[test]
    fn normal_attack_targets_enemy_categories() {
        let row = LEGALITY_MATRIX[Button::NormalAttack as usize];
        assert!(row[TargetCategory::EnemyHeroes as usize]);
        assert!(row[TargetCategory::Monster as usize]);
        assert!(row[TargetCategory::Soldier as usize]);
        assert!(row[TargetCategory::Turret as usize]);
        assert!(!row[TargetCategory::None as usize]);
        assert!(!row[TargetCategory::FriendHeroes as usize]);
        assert!(ACTIVATION_MAP[Button::NormalAttack as usize].target);
        assert!(!ACTIVATION_MAP[Button::NormalAttack as usize].move_dir);
    }

    #[test]
    fn noops_activate_nothing() {
        for b in [Button::NoOp0, Button::NoOp1] {
            let a = ACTIVATION_MAP[b as usize];
            assert_eq!(a, A_NONE);
        }
    }

    #[test]
    fn head_dims() {
        assert_eq!(HEAD_DIMS, [13, 25, 42, 42, 39]);
        assert_eq!(HEAD_DIMS.iter().sum::<usize>(), 161);
    }
}
