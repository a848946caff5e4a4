//! Binary morphology on 0/1 label volumes.
//!
//! Foreground uses 6-connectivity and background 26-connectivity. The
//! structuring element of radius `r` is the 26-neighbourhood ball, i.e. the
//! cube of side `2r + 1`.

use std::collections::VecDeque;

use super::LabelVolume;
use crate::error::{invalid, Error, Result};

fn require_binary(mask: &LabelVolume) -> Result<()> {
    if mask.is_binary() {
        Ok(())
    } else {
        Err(invalid("mask must contain only 0 and 1"))
    }
}

/// Separable running max (`dilate = true`) or min along one axis of a
/// boolean grid, window `[-r, r]`. Samples outside the grid count as false.
fn filter_axis(data: &[bool], dims: [usize; 3], axis: usize, r: usize, dilate: bool) -> Vec<bool> {
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let n = dims[axis];
    let mut out = vec![false; data.len()];
    let lines = data.len() / n;
    // Enumerate line starts: all indices whose coordinate along `axis` is 0.
    for line in 0..lines {
        let start = match axis {
            0 => line * dims[0],
            1 => (line / dims[0]) * dims[0] * dims[1] + line % dims[0],
            _ => line,
        };
        // prefix counts of `true` along the line
        let mut prefix = vec![0usize; n + 1];
        for t in 0..n {
            prefix[t + 1] = prefix[t] + usize::from(data[start + t * stride]);
        }
        for t in 0..n {
            let lo = t.saturating_sub(r);
            let hi = (t + r).min(n - 1);
            let count = prefix[hi + 1] - prefix[lo];
            out[start + t * stride] = if dilate {
                count > 0
            } else {
                // window must be fully inside and fully set
                t >= r && t + r < n && count == 2 * r + 1
            };
        }
    }
    out
}

fn cube_filter(data: &[bool], dims: [usize; 3], r: usize, dilate: bool) -> Vec<bool> {
    let a = filter_axis(data, dims, 0, r, dilate);
    let b = filter_axis(&a, dims, 1, r, dilate);
    filter_axis(&b, dims, 2, r, dilate)
}

fn to_bools(mask: &LabelVolume) -> Vec<bool> {
    mask.data().iter().map(|&v| v != 0).collect()
}

fn from_bools(like: &LabelVolume, data: &[bool]) -> LabelVolume {
    like.with_data(data.iter().map(|&b| u16::from(b)).collect())
}

/// Dilation by the cube of radius `r`; voxels outside the grid are background.
pub fn dilate(mask: &LabelVolume, radius: usize) -> Result<LabelVolume> {
    require_binary(mask)?;
    let d = mask.geometry().dims();
    Ok(from_bools(mask, &cube_filter(&to_bools(mask), d, radius, true)))
}

/// Erosion by the cube of radius `r`; voxels outside the grid are background.
pub fn erode(mask: &LabelVolume, radius: usize) -> Result<LabelVolume> {
    require_binary(mask)?;
    let d = mask.geometry().dims();
    Ok(from_bools(mask, &cube_filter(&to_bools(mask), d, radius, false)))
}

/// Dilation followed by erosion with the same element. The grid is padded
/// by `radius` internally so the result is the unbounded closing cropped
/// back to the input grid.
pub fn morphological_close(mask: &LabelVolume, radius: usize) -> Result<LabelVolume> {
    require_binary(mask)?;
    if radius == 0 {
        return Err(invalid("closing radius must be >= 1"));
    }
    let d = mask.geometry().dims();
    let pd = [d[0] + 2 * radius, d[1] + 2 * radius, d[2] + 2 * radius];
    let mut padded = vec![false; pd[0] * pd[1] * pd[2]];
    for k in 0..d[2] {
        for j in 0..d[1] {
            for i in 0..d[0] {
                padded[(i + radius) + pd[0] * ((j + radius) + pd[1] * (k + radius))] = mask.get(i, j, k) != 0;
            }
        }
    }
    let closed = cube_filter(&cube_filter(&padded, pd, radius, true), pd, radius, false);
    let mut out = vec![0u16; mask.data().len()];
    for k in 0..d[2] {
        for j in 0..d[1] {
            for i in 0..d[0] {
                out[i + d[0] * (j + d[1] * k)] =
                    u16::from(closed[(i + radius) + pd[0] * ((j + radius) + pd[1] * (k + radius))]);
            }
        }
    }
    Ok(mask.with_data(out))
}

fn neighbors6(c: [usize; 3], dims: [usize; 3]) -> impl Iterator<Item = [usize; 3]> {
    const OFFS: [[isize; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];
    OFFS.iter().filter_map(move |o| {
        let mut n = [0usize; 3];
        for a in 0..3 {
            let v = c[a] as isize + o[a];
            if v < 0 || v >= dims[a] as isize {
                return None;
            }
            n[a] = v as usize;
        }
        Some(n)
    })
}

/// Keeps the largest 6-connected foreground component. Ties go to the
/// component whose first voxel (in linear order) comes first.
pub fn largest_component(mask: &LabelVolume) -> Result<LabelVolume> {
    require_binary(mask)?;
    let g = mask.geometry();
    let dims = g.dims();
    let data = mask.data();
    let mut comp = vec![u32::MAX; data.len()];
    let mut best: Option<(u32, usize)> = None;
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..data.len() {
        if data[start] == 0 || comp[start] != u32::MAX {
            continue;
        }
        let id = next;
        next += 1;
        comp[start] = id;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(idx) = queue.pop_front() {
            size += 1;
            for n in neighbors6(g.coords(idx), dims) {
                let ni = g.index(n[0], n[1], n[2]);
                if data[ni] != 0 && comp[ni] == u32::MAX {
                    comp[ni] = id;
                    queue.push_back(ni);
                }
            }
        }
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((id, size));
        }
    }
    let (keep, _) = best.ok_or(Error::EmptyMask)?;
    Ok(mask.with_data(comp.iter().map(|&c| u16::from(c == keep)).collect()))
}

/// Fills background regions that are not 26-connected to the outside of the grid.
pub fn fill_cavities(mask: &LabelVolume) -> Result<LabelVolume> {
    require_binary(mask)?;
    let d = mask.geometry().dims();
    // pad by one so every border background voxel connects to the outside
    let pd = [d[0] + 2, d[1] + 2, d[2] + 2];
    let pidx = |i: usize, j: usize, k: usize| i + pd[0] * (j + pd[1] * k);
    let mut fg = vec![false; pd[0] * pd[1] * pd[2]];
    for k in 0..d[2] {
        for j in 0..d[1] {
            for i in 0..d[0] {
                fg[pidx(i + 1, j + 1, k + 1)] = mask.get(i, j, k) != 0;
            }
        }
    }
    let mut outside = vec![false; fg.len()];
    let mut queue = VecDeque::from([0usize]);
    outside[0] = true;
    while let Some(idx) = queue.pop_front() {
        let i = idx % pd[0];
        let j = (idx / pd[0]) % pd[1];
        let k = idx / (pd[0] * pd[1]);
        for dk in -1i64..=1 {
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                    if ni < 0 || nj < 0 || nk < 0 {
                        continue;
                    }
                    let (ni, nj, nk) = (ni as usize, nj as usize, nk as usize);
                    if ni >= pd[0] || nj >= pd[1] || nk >= pd[2] {
                        continue;
                    }
                    let n = pidx(ni, nj, nk);
                    if !fg[n] && !outside[n] {
                        outside[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
    }
    let mut out = vec![0u16; mask.data().len()];
    for k in 0..d[2] {
        for j in 0..d[1] {
            for i in 0..d[0] {
                out[i + d[0] * (j + d[1] * k)] = u16::from(!outside[pidx(i + 1, j + 1, k + 1)]);
            }
        }
    }
    Ok(mask.with_data(out))
}

/// Adds foreground voxels until no critical edge or vertex configuration
/// remains, so that the voxel-face surface needs no split vertices.
///
/// Critical edge: a 2x2 block in an axis plane with exactly one diagonal pair
/// set. Critical vertex: a 2x2x2 block whose set voxels (or unset voxels)
/// are exactly one antipodal pair. The fix sets the lowest-index unset voxel
/// of the block; the loop repeats until a full pass makes no change.
pub fn make_well_composed(mask: &LabelVolume) -> Result<LabelVolume> {
    require_binary(mask)?;
    let g = mask.geometry().clone();
    let d = g.dims();
    let mut m: Vec<bool> = to_bools(mask);
    loop {
        let mut changed = false;
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    // edge configurations in the three axis planes
                    let planes: [([usize; 3], [usize; 3]); 3] =
                        [([1, 0, 0], [0, 1, 0]), ([1, 0, 0], [0, 0, 1]), ([0, 1, 0], [0, 0, 1])];
                    for (u, v) in planes {
                        if i + u[0] + v[0] >= d[0] || j + u[1] + v[1] >= d[1] || k + u[2] + v[2] >= d[2] {
                            continue;
                        }
                        let a = g.index(i, j, k);
                        let b = g.index(i + u[0], j + u[1], k + u[2]);
                        let c = g.index(i + v[0], j + v[1], k + v[2]);
                        let e = g.index(i + u[0] + v[0], j + u[1] + v[1], k + u[2] + v[2]);
                        if m[a] && m[e] && !m[b] && !m[c] {
                            m[b.min(c)] = true;
                            changed = true;
                        } else if m[b] && m[c] && !m[a] && !m[e] {
                            m[a] = true;
                            changed = true;
                        }
                    }
                    if i + 1 >= d[0] || j + 1 >= d[1] || k + 1 >= d[2] {
                        continue;
                    }
                    let mut block = [0usize; 8];
                    for (n, slot) in block.iter_mut().enumerate() {
                        *slot = g.index(i + (n & 1), j + ((n >> 1) & 1), k + ((n >> 2) & 1));
                    }
                    let set: Vec<usize> = (0..8).filter(|&n| m[block[n]]).collect();
                    let antipodal = |p: &[usize]| p.len() == 2 && p[0] ^ p[1] == 7;
                    if antipodal(&set) {
                        let fill = (0..8).find(|&n| !m[block[n]]).expect("block has unset voxels");
                        m[block[fill]] = true;
                        changed = true;
                    } else {
                        let unset: Vec<usize> = (0..8).filter(|&n| !m[block[n]]).collect();
                        if antipodal(&unset) {
                            m[block[unset[0]]] = true;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(from_bools(mask, &m))
}
