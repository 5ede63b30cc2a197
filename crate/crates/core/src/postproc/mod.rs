//! Clean-up of binary sulcus predictions before meshing: dilate, label
//! the connected components of the dilated mask and keep the original
//! voxels that fall in the largest components.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Volume};

/// Voxel adjacency: faces (6), faces + edges (18), or faces + edges +
/// corners (26).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    Eighteen,
    TwentySix,
}

impl Connectivity {
    pub const ALL: [Connectivity; 3] = [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix];

    /// Neighbour offsets, excluding the origin.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let max_nonzero = match self {
            Connectivity::Six => 1,
            Connectivity::Eighteen => 2,
            Connectivity::TwentySix => 3,
        };
        let mut out = Vec::with_capacity(26);
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let nz = (dx != 0) as usize + (dy != 0) as usize + (dz != 0) as usize;
                    if nz >= 1 && nz <= max_nonzero {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    pub fn neighbours(self) -> u8 {
        u8::from(self)
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            other => Err(format!("connectivity must be 6, 18 or 26 (got {other})")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostprocConfig {
    pub dilation_radius: usize,
    pub connectivity: Connectivity,
    pub keep: usize,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        Self {
            dilation_radius: 1,
            connectivity: Connectivity::TwentySix,
            keep: 2,
        }
    }
}

impl PostprocConfig {
    pub fn validate(&self) -> Result<()> {
        if self.keep == 0 {
            return Err(Error::InvalidConfig("keep must be >= 1".into()));
        }
        Ok(())
    }
}

/// Dilation by the connectivity's 3x3x3 structuring element, applied
/// `radius` times.
pub fn dilate(mask: &BinaryMask, radius: usize, connectivity: Connectivity) -> BinaryMask {
    let offsets = connectivity.offsets();
    let grid = mask.grid().clone();
    let mut cur = mask.clone();
    for _ in 0..radius {
        let src = &cur;
        let voxels: Vec<bool> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                if src.voxels()[i] {
                    return true;
                }
                let [x, y, z] = grid.coords(i);
                offsets
                    .iter()
                    .any(|o| src.get_or_background([x as isize + o[0], y as isize + o[1], z as isize + o[2]]))
            })
            .collect();
        cur = src.with_data(voxels);
    }
    cur
}

/// Connected-component decomposition of a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLabeling {
    /// Component id per voxel, 0 for background. Ids are `1..=count`
    /// ordered by decreasing size, ties by smallest linear voxel index.
    pub labels: Volume<u32>,
    /// `sizes[k]` is the voxel count of component `k + 1`.
    pub sizes: Vec<usize>,
}

impl ComponentLabeling {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        let p = parent[i as usize];
        parent[i as usize] = parent[p as usize];
        i = p;
    }
    i
}

/// Labels connected components with a single-pass union-find.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabeling {
    let grid = mask.grid();
    let n = grid.len();
    let data = mask.voxels();
    // only neighbours already visited in raster order
    let backward: Vec<[isize; 3]> = connectivity
        .offsets()
        .into_iter()
        .filter(|o| (o[2], o[1], o[0]) < (0, 0, 0))
        .collect();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    for i in 0..n {
        if !data[i] {
            continue;
        }
        let [x, y, z] = grid.coords(i);
        for o in &backward {
            let p = [x as isize + o[0], y as isize + o[1], z as isize + o[2]];
            if !grid.contains(p) {
                continue;
            }
            let j = grid.index(p[0] as usize, p[1] as usize, p[2] as usize);
            if data[j] {
                let (ri, rj) = (find(&mut parent, i as u32), find(&mut parent, j as u32));
                if ri != rj {
                    // keep the smaller index as root
                    let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
                    parent[hi as usize] = lo;
                }
            }
        }
    }
    // roots are the smallest linear index of their component
    let mut size_of_root = vec![0usize; n];
    let mut roots = Vec::new();
    for i in 0..n {
        if data[i] {
            let r = find(&mut parent, i as u32) as usize;
            parent[i] = r as u32;
            if size_of_root[r] == 0 {
                roots.push(r);
            }
            size_of_root[r] += 1;
        }
    }
    roots.sort_by(|&a, &b| size_of_root[b].cmp(&size_of_root[a]).then(a.cmp(&b)));
    let mut id_of_root = vec![0u32; n];
    for (k, &r) in roots.iter().enumerate() {
        id_of_root[r] = k as u32 + 1;
    }
    let labels: Vec<u32> = (0..n)
        .map(|i| if data[i] { id_of_root[parent[i] as usize] } else { 0 })
        .collect();
    let sizes = roots.iter().map(|&r| size_of_root[r]).collect();
    ComponentLabeling {
        labels: mask.with_data(labels),
        sizes,
    }
}

/// Keeps the original voxels lying in the `keep` largest components of
/// the dilated mask. Fewer components than `keep` keeps them all.
pub fn keep_two_largest(original: &BinaryMask, config: &PostprocConfig) -> Result<BinaryMask> {
    config.validate()?;
    let dilated = dilate(original, config.dilation_radius, config.connectivity);
    let cc = connected_components(&dilated, config.connectivity);
    let keep = config.keep as u32;
    let voxels = original
        .voxels()
        .iter()
        .zip(cc.labels.voxels())
        .map(|(&o, &id)| o && id >= 1 && id <= keep)
        .collect();
    Ok(original.with_data(voxels))
}

/// Central-sulcus clean-up applied before meshing; idempotent.
pub fn postprocess_cs(pred: &BinaryMask, config: &PostprocConfig) -> Result<BinaryMask> {
    keep_two_largest(pred, config)
}
