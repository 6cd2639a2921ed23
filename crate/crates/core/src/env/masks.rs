//! Legality masks derived from frame bits and the static legality matrix.

use super::actions::{
    expand_legality_row, Activation, ACTIVATION_MAP, BUTTON_DIM, MOVE_DIM, OFFSET_DIM,
    TARGET_CATEGORY_EXTENTS, TARGET_DIM,
};
use super::frames::{button_bit_location, FrameGroup, UNIT_VISIBILITY_COORD};
use super::schema::{ObservationSchema, HEROES_PER_TEAM};

/// Per-hero legality masks for all five heads. Move and offset heads are
/// always fully legal when active; the paper gives no restriction rules for
/// them. The target mask is per-button (13x39).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    pub button: [bool; BUTTON_DIM],
    pub move_dir: [bool; MOVE_DIM],
    pub offset_x: [bool; OFFSET_DIM],
    pub offset_z: [bool; OFFSET_DIM],
    pub target: [[bool; TARGET_DIM]; BUTTON_DIM],
}

pub const MASK_PACKED_BYTES: usize = 2 + 4 + 6 + 6 + 64;

impl MaskSet {
    /// Target mask conditioned on a chosen button. Buttons that do not
    /// activate the target head (or whose raw row is empty) fall back to the
    /// lone "none" slot so the distribution support is never empty.
    pub fn effective_target_mask(&self, button: usize) -> [bool; TARGET_DIM] {
        let row = &self.target[button];
        if row.iter().any(|b| *b) {
            *row
        } else {
            let mut fallback = [false; TARGET_DIM];
            fallback[0] = true;
            fallback
        }
    }

    /// Masks for the five heads in record order given a conditioning button.
    pub fn head_masks(&self, button: usize) -> [Vec<bool>; 5] {
        [
            self.button.to_vec(),
            self.move_dir.to_vec(),
            self.offset_x.to_vec(),
            self.offset_z.to_vec(),
            self.effective_target_mask(button).to_vec(),
        ]
    }

    pub fn legal_button_count(&self) -> usize {
        self.button.iter().filter(|b| **b).count()
    }

    /// Packs all masks LSB-first per head in order button, move, ox, oz,
    /// then the 13 target rows.
    pub fn pack(&self) -> [u8; MASK_PACKED_BYTES] {
        let mut out = [0u8; MASK_PACKED_BYTES];
        let mut cursor = 0;
        let write = |bits: &[bool], bytes: usize, out: &mut [u8; MASK_PACKED_BYTES], cursor: &mut usize| {
            for (i, b) in bits.iter().enumerate() {
                if *b {
                    out[*cursor + i / 8] |= 1 << (i % 8);
                }
            }
            *cursor += bytes;
        };
        write(&self.button, 2, &mut out, &mut cursor);
        write(&self.move_dir, 4, &mut out, &mut cursor);
        write(&self.offset_x, 6, &mut out, &mut cursor);
        write(&self.offset_z, 6, &mut out, &mut cursor);
        let mut flat = [false; BUTTON_DIM * TARGET_DIM];
        for (b, row) in self.target.iter().enumerate() {
            flat[b * TARGET_DIM..(b + 1) * TARGET_DIM].copy_from_slice(row);
        }
        write(&flat, 64, &mut out, &mut cursor);
        out
    }

    pub fn unpack(bytes: &[u8]) -> Option<Self> {
        if bytes.len() < MASK_PACKED_BYTES {
            return None;
        }
        let mut cursor = 0usize;
        let read = |n_bits: usize, n_bytes: usize, cursor: &mut usize| -> Vec<bool> {
            let v = (0..n_bits)
                .map(|i| bytes[*cursor + i / 8] & (1 << (i % 8)) != 0)
                .collect();
            *cursor += n_bytes;
            v
        };
        let button = read(BUTTON_DIM, 2, &mut cursor);
        let move_dir = read(MOVE_DIM, 4, &mut cursor);
        let offset_x = read(OFFSET_DIM, 6, &mut cursor);
        let offset_z = read(OFFSET_DIM, 6, &mut cursor);
        let flat = read(BUTTON_DIM * TARGET_DIM, 64, &mut cursor);
        let mut ms = MaskSet {
            button: [false; BUTTON_DIM],
            move_dir: [false; MOVE_DIM],
            offset_x: [false; OFFSET_DIM],
            offset_z: [false; OFFSET_DIM],
            target: [[false; TARGET_DIM]; BUTTON_DIM],
        };
        ms.button.copy_from_slice(&button);
        ms.move_dir.copy_from_slice(&move_dir);
        ms.offset_x.copy_from_slice(&offset_x);
        ms.offset_z.copy_from_slice(&offset_z);
        for b in 0..BUTTON_DIM {
            ms.target[b].copy_from_slice(&flat[b * TARGET_DIM..(b + 1) * TARGET_DIM]);
        }
        Some(ms)
    }
}

/// Per-slot visibility of the 39 targets in hero `h`'s view. Slot 0 ("none")
/// carries no unit; the self slot is always visible. Hero rows 0..3 are the
/// own team (row index == hero index), rows 3..6 the enemy team.
fn target_visibility(frame: &[f32], schema: &ObservationSchema, hero: usize) -> [bool; TARGET_DIM] {
    let offs = schema.offsets();
    let hd = schema.heroes.1;
    let sd = schema.soldiers.1;
    let td = schema.turrets.1;
    let md = schema.monsters.1;
    let unit_bit = |base: usize, dim: usize, u: usize| frame[base + u * dim + UNIT_VISIBILITY_COORD] > 0.5;

    let mut vis = [false; TARGET_DIM];
    vis[0] = true; // none
    let mut slot = 1;
    for u in 3..6 {
        vis[slot] = unit_bit(offs.heroes, hd, u); // enemy heroes
        slot += 1;
    }
    for u in 0..3 {
        vis[slot] = unit_bit(offs.heroes, hd, u); // friend heroes
        slot += 1;
    }
    vis[slot] = unit_bit(offs.heroes, hd, hero); // self (forced 1 by generator)
    slot += 1;
    for u in 0..TARGET_CATEGORY_EXTENTS[4] {
        vis[slot] = unit_bit(offs.monsters, md, u);
        slot += 1;
    }
    for u in 0..TARGET_CATEGORY_EXTENTS[5] {
        vis[slot] = unit_bit(offs.soldiers, sd, u);
        slot += 1;
    }
    vis[slot] = unit_bit(offs.turrets, td, 0);
    vis
}

/// Pure function of the frame's legality bits and the static legality matrix.
pub fn derive_masks_for_hero(frame: &[f32], schema: &ObservationSchema, hero: usize) -> MaskSet {
    let offs = schema.offsets();
    let hd = schema.heroes.1;
    let vis = target_visibility(frame, schema, hero);

    let mut target = [[false; TARGET_DIM]; BUTTON_DIM];
    for (b, row) in target.iter_mut().enumerate() {
        let legal = expand_legality_row(b);
        for s in 0..TARGET_DIM {
            // the "none" slot needs no unit visibility
            row[s] = legal[s] && (s == 0 || vis[s]);
        }
    }

    let mut button = [false; BUTTON_DIM];
    for (b, out) in button.iter_mut().enumerate() {
        let (row, coord) = button_bit_location(b);
        let available = frame[offs.heroes + row * hd + coord] > 0.5;
        let act: Activation = ACTIVATION_MAP[b];
        let target_ok = !act.target || target[b].iter().any(|v| *v);
        *out = available && target_ok;
    }
    button[0] = true; // no-op is always legal: non-empty support guaranteed

    MaskSet {
        button,
        move_dir: [true; MOVE_DIM],
        offset_x: [true; OFFSET_DIM],
        offset_z: [true; OFFSET_DIM],
        target,
    }
}

pub fn derive_masks(group: &FrameGroup, schema: &ObservationSchema) -> [MaskSet; HEROES_PER_TEAM] {
    std::array::from_fn(|h| derive_masks_for_hero(group.hero(schema, h), schema, h))
}
