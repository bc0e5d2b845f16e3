use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    /// Population level `nu_l`, one column per carried level.
    Nu,
    /// Scalar effects `beta_l`, one column per load covariate.
    Beta,
    /// Marginal microstructure coefficients `b_ls`, one column per component.
    Micro,
    /// Interaction coefficients `b'_lps`, one column per component.
    Interaction,
}

/// Contiguous block of the coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub kind: SegmentKind,
    /// Basis level (unused for `Nu`, which spans all levels).
    pub level: usize,
    pub scalar: Option<usize>,
    pub micro: Option<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Ordering of the coefficient vector: `nu`, then `beta_l` by level, then
/// `b_ls` by level and covariate, then `b'_lps` by level, load covariate and
/// microstructure covariate. Blocks of disabled model components are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaLayout {
    pub levels: Vec<usize>,
    pub n_scalars: usize,
    pub scalar_names: Vec<String>,
    pub n_micro: usize,
    pub micro_names: Vec<String>,
    pub k: usize,
    pub segments: Vec<Segment>,
}

impl ZetaLayout {
    pub fn new(
        levels: Vec<usize>,
        scalar_names: Vec<String>,
        micro_names: Vec<String>,
        k: usize,
        include_scalar: bool,
        include_micro: bool,
        include_interaction: bool,
    ) -> Self {
        let mut segments = Vec::new();
        let mut offset = 0;
        let mut push = |segments: &mut Vec<Segment>, name: String, kind, level, scalar, micro, len| {
            segments.push(Segment {
                name,
                kind,
                level,
                scalar,
                micro,
                offset,
                len,
            });
            offset += len;
        };
        push(
            &mut segments,
            "nu".into(),
            SegmentKind::Nu,
            levels[0],
            None,
            None,
            levels.len(),
        );
        let (p, s) = (scalar_names.len(), micro_names.len());
        let k = if include_micro { k } else { 0 };
        if include_scalar && p > 0 {
            for &l in &levels {
                push(&mut segments, format!("beta_{l}"), SegmentKind::Beta, l, None, None, p);
            }
        }
        if include_micro && k > 0 {
            for &l in &levels {
                for (si, sn) in micro_names.iter().enumerate() {
                    push(
                        &mut segments,
                        format!("b_{l}_{sn}"),
                        SegmentKind::Micro,
                        l,
                        None,
                        Some(si),
                        k,
                    );
                }
            }
            if include_interaction {
                for &l in &levels {
                    for (pi, pn) in scalar_names.iter().enumerate() {
                        for (si, sn) in micro_names.iter().enumerate() {
                            push(
                                &mut segments,
                                format!("bprime_{l}_{pn}_{sn}"),
                                SegmentKind::Interaction,
                                l,
                                Some(pi),
                                Some(si),
                                k,
                            );
                        }
                    }
                }
            }
        }
        Self {
            levels,
            n_scalars: p,
            scalar_names,
            n_micro: if include_micro { s } else { 0 },
            micro_names: if include_micro { micro_names } else { Vec::new() },
            k,
            segments,
        }
    }

    /// Total number of coefficients `U`.
    pub fn width(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.len)
    }

    pub fn has_micro(&self) -> bool {
        self.segments.iter().any(|s| s.kind == SegmentKind::Micro)
    }

    pub fn has_kind(&self, kind: SegmentKind) -> bool {
        self.segments.iter().any(|s| s.kind == kind)
    }

    pub fn level_index(&self, level: usize) -> usize {
        self.levels
            .iter()
            .position(|&l| l == level)
            .expect("segment level belongs to the layout")
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        for seg in &self.segments {
            for j in 0..seg.len {
                names.push(match seg.kind {
                    SegmentKind::Nu => format!("nu[{}]", self.levels[j]),
                    SegmentKind::Beta => format!("beta[{}:{}]", seg.level, self.scalar_names[j]),
                    SegmentKind::Micro => {
                        format!("b[{}:{}:{}]", seg.level, self.micro_names[seg.micro.unwrap()], j + 1)
                    }
                    SegmentKind::Interaction => format!(
                        "bprime[{}:{}:{}:{}]",
                        seg.level,
                        self.scalar_names[seg.scalar.unwrap()],
                        self.micro_names[seg.micro.unwrap()],
                        j + 1
                    ),
                });
            }
        }
        names
    }

    /// Segments matching `kind` at `level`.
    pub fn find(&self, kind: SegmentKind, level: usize) -> impl Iterator<Item = &Segment> {
        self.segments
            .iter()
            .filter(move |s| s.kind == kind && (kind == SegmentKind::Nu || s.level == level))
    }

    pub fn slice<'a>(&self, zeta: &'a DVector<f64>, seg: &Segment) -> &'a [f64] {
        &zeta.as_slice()[seg.offset..seg.offset + seg.len]
    }
}
