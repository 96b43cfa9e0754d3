//! Patch decomposition of flattened images.
//!
//! Images are stored row-major with interleaved channels: pixel `(row, col)`
//! channel `ch` of an `S × S × c` image lives at `(row * S + col) * c + ch`.
//! A layout tiles the (periodically shifted) image with `p × p` patches of side
//! `q`, `p = ⌊S/q⌋`; pixels that no patch covers are left untouched.

use nalgebra::DMatrix;

use crate::error::{Result, SinfError};

/// Whether a patch spans all channels or a single one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMode {
    FullDepth,
    SingleChannel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchLayout {
    side: usize,
    channels: usize,
    patch: usize,
    shift: (usize, usize),
    mode: ChannelMode,
    patches: Vec<Vec<usize>>,
    leftover: Vec<usize>,
}

impl PatchLayout {
    /// Builds the index sets for side `S`, depth `c`, patch side `q` and a
    /// shift that wraps periodically.
    pub fn new(
        side: usize,
        channels: usize,
        patch: usize,
        shift: (usize, usize),
        mode: ChannelMode,
    ) -> Result<Self> {
        if side == 0 || channels == 0 {
            return Err(SinfError::InvalidArgument(format!(
                "image shape must be positive, got S={side}, c={channels}"
            )));
        }
        if patch == 0 || patch > side {
            return Err(SinfError::InvalidArgument(format!(
                "patch side must satisfy 1 <= q <= S, got q={patch}, S={side}"
            )));
        }
        let shift = (shift.0 % side, shift.1 % side);
        let per_side = side / patch;
        let pixel = |i: usize, j: usize, r: usize, c: usize| {
            let row = (shift.0 + i * patch + r) % side;
            let col = (shift.1 + j * patch + c) % side;
            row * side + col
        };

        let mut patches = Vec::new();
        for i in 0..per_side {
            for j in 0..per_side {
                match mode {
                    ChannelMode::FullDepth => {
                        let mut idx = Vec::with_capacity(patch * patch * channels);
                        for r in 0..patch {
                            for c in 0..patch {
                                let base = pixel(i, j, r, c) * channels;
                                idx.extend(base..base + channels);
                            }
                        }
                        patches.push(idx);
                    }
                    ChannelMode::SingleChannel => {
                        for ch in 0..channels {
                            let mut idx = Vec::with_capacity(patch * patch);
                            for r in 0..patch {
                                for c in 0..patch {
                                    idx.push(pixel(i, j, r, c) * channels + ch);
                                }
                            }
                            patches.push(idx);
                        }
                    }
                }
            }
        }

        let total = side * side * channels;
        let mut covered = vec![false; total];
        for &k in patches.iter().flatten() {
            covered[k] = true;
        }
        let leftover = (0..total).filter(|&k| !covered[k]).collect();

        Ok(Self {
            side,
            channels,
            patch,
            shift,
            mode,
            patches,
            leftover,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn patch_side(&self) -> usize {
        self.patch
    }

    pub fn shift(&self) -> (usize, usize) {
        self.shift
    }

    pub fn mode(&self) -> ChannelMode {
        self.mode
    }

    /// Patches per side, `⌊S/q⌋`.
    pub fn patches_per_side(&self) -> usize {
        self.side / self.patch
    }

    /// Flattened data dimension `S²c`.
    pub fn dim(&self) -> usize {
        self.side * self.side * self.channels
    }

    /// Dimension of one patch.
    pub fn patch_dim(&self) -> usize {
        match self.mode {
            ChannelMode::FullDepth => self.patch * self.patch * self.channels,
            ChannelMode::SingleChannel => self.patch * self.patch,
        }
    }

    pub fn patch_indices(&self) -> &[Vec<usize>] {
        &self.patches
    }

    pub fn num_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn leftover(&self) -> &[usize] {
        &self.leftover
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(SinfError::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// Copies the columns of one patch out of `x`.
    pub fn gather_one(&self, x: &DMatrix<f64>, patch: usize) -> Result<DMatrix<f64>> {
        self.check_dim(x.ncols())?;
        Ok(x.select_columns(self.patches[patch].iter()))
    }

    /// Writes a patch block back into the matching columns of `x`.
    pub fn scatter_one(
        &self,
        x: &mut DMatrix<f64>,
        patch: usize,
        block: &DMatrix<f64>,
    ) -> Result<()> {
        self.check_dim(x.ncols())?;
        let idx = &self.patches[patch];
        if block.ncols() != idx.len() || block.nrows() != x.nrows() {
            return Err(SinfError::DimensionMismatch {
                expected: x.nrows() * idx.len(),
                got: block.nrows() * block.ncols(),
            });
        }
        for (slot, &col) in idx.iter().enumerate() {
            x.column_mut(col).copy_from(&block.column(slot));
        }
        Ok(())
    }
}

/// The per-patch blocks of a sample matrix plus the uncovered columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Patches {
    pub blocks: Vec<DMatrix<f64>>,
    pub leftover: DMatrix<f64>,
}

pub fn gather_patches(layout: &PatchLayout, x: &DMatrix<f64>) -> Result<Patches> {
    layout.check_dim(x.ncols())?;
    let blocks = (0..layout.num_patches())
        .map(|p| layout.gather_one(x, p))
        .collect::<Result<Vec<_>>>()?;
    let leftover = x.select_columns(layout.leftover.iter());
    Ok(Patches { blocks, leftover })
}

pub fn scatter_patches(layout: &PatchLayout, patches: &Patches) -> Result<DMatrix<f64>> {
    if patches.blocks.len() != layout.num_patches() {
        return Err(SinfError::InvalidArgument(format!(
            "expected {} patches, got {}",
            layout.num_patches(),
            patches.blocks.len()
        )));
    }
    if patches.leftover.ncols() != layout.leftover.len() {
        return Err(SinfError::DimensionMismatch {
            expected: layout.leftover.len(),
            got: patches.leftover.ncols(),
        });
    }
    let n = patches.leftover.nrows();
    let mut x = DMatrix::zeros(n, layout.dim());
    for (p, block) in patches.blocks.iter().enumerate() {
        layout.scatter_one(&mut x, p, block)?;
    }
    for (slot, &col) in layout.leftover.iter().enumerate() {
        x.column_mut(col).copy_from(&patches.leftover.column(slot));
    }
    Ok(x)
}

/// One stage of a hierarchical patch schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchStage {
    pub patch: usize,
    pub mode: ChannelMode,
    pub k: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchSchedule {
    pub stages: Vec<PatchStage>,
}

impl PatchSchedule {
    pub fn new(stages: Vec<PatchStage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(SinfError::InvalidArgument("empty patch schedule".into()));
        }
        if stages.windows(2).any(|w| w[1].patch > w[0].patch) {
            return Err(SinfError::InvalidArgument(
                "patch sides must be non-increasing across stages".into(),
            ));
        }
        if stages
            .iter()
            .any(|s| s.k == 0 || s.iterations == 0 || s.patch == 0)
        {
            return Err(SinfError::InvalidArgument(
                "patch stages need positive q, K and iteration counts".into(),
            ));
        }
        if stages.last().is_some_and(|s| s.patch < 2) {
            return Err(SinfError::InvalidArgument(
                "final patch side must be at least 2".into(),
            ));
        }
        Ok(Self { stages })
    }

    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }
}

/// Hierarchical schedule from the whole image down to 2×2 patches.
///
/// Patch sides halve while even and above 8, then step down by one to 2
/// (28 → 14 → 7 → 6 … 2). Full-depth stages use `K = 2q`, capped at the patch
/// dimension. For multi-channel images each stage with `q ≤ 8` is followed by
/// a single-channel stage with `K = q`.
pub fn default_schedule(side: usize, channels: usize, iterations: usize) -> Result<PatchSchedule> {
    if side < 2 || channels == 0 || iterations == 0 {
        return Err(SinfError::InvalidArgument(format!(
            "default schedule needs S >= 2, c >= 1, iterations >= 1 (got {side}, {channels}, {iterations})"
        )));
    }
    let mut sides = vec![side];
    let mut q = side;
    while q > 2 {
        q = if q.is_multiple_of(2) && q > 8 {
            q / 2
        } else {
            q - 1
        };
        sides.push(q);
    }
    let mut stages = Vec::new();
    for q in sides {
        stages.push(PatchStage {
            patch: q,
            mode: ChannelMode::FullDepth,
            k: (2 * q).min(q * q * channels),
            iterations,
        });
        if channels > 1 && q <= 8 {
            stages.push(PatchStage {
                patch: q,
                mode: ChannelMode::SingleChannel,
                k: q.min(q * q),
                iterations,
            });
        }
    }
    PatchSchedule::new(stages)
}
