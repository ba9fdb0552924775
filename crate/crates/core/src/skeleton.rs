//! Skeleton descriptions and body-part partitions of the feature vector.
//!
//! A description file is line oriented; `#` starts a comment:
//!
//! ```text
//! convention zyx
//! joint <name> <start> <len> [global]
//! group <scheme> <group-name> <joint> <joint> ...
//! ```
//!
//! Joint spans must tile `[0, dim)` without gaps or overlaps. Groups for the
//! three-branch schemes may be omitted; they are derived from `five_part`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Joint {
    pub name: String,
    pub start: usize,
    pub len: usize,
    /// Root translation / global orientation; excluded from the error metric.
    pub global: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EulerConvention {
    /// Intrinsic Z, then Y, then X.
    #[default]
    Zyx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    FivePart,
    LrThree,
    UdThree,
    Whole,
}

impl SchemeName {
    pub const ALL: [SchemeName; 4] =
        [SchemeName::FivePart, SchemeName::LrThree, SchemeName::UdThree, SchemeName::Whole];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeName::FivePart => "five_part",
            SchemeName::LrThree => "lr_three",
            SchemeName::UdThree => "ud_three",
            SchemeName::Whole => "whole",
        }
    }

    /// Group names in branch order.
    pub fn group_names(self) -> &'static [&'static str] {
        match self {
            SchemeName::FivePart => &["left_arm", "right_arm", "left_leg", "right_leg", "torso"],
            SchemeName::LrThree => &["left", "right", "torso"],
            SchemeName::UdThree => &["arms", "legs", "torso"],
            SchemeName::Whole => &["whole"],
        }
    }

    /// How each group of this scheme is built from `five_part` groups.
    fn coarsening(self) -> &'static [&'static [&'static str]] {
        match self {
            SchemeName::FivePart => &[&["left_arm"], &["right_arm"], &["left_leg"], &["right_leg"], &["torso"]],
            SchemeName::LrThree => &[&["left_arm", "left_leg"], &["right_arm", "right_leg"], &["torso"]],
            SchemeName::UdThree => &[&["left_arm", "right_arm"], &["left_leg", "right_leg"], &["torso"]],
            SchemeName::Whole => &[&["left_arm", "right_arm", "left_leg", "right_leg", "torso"]],
        }
    }
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown partition scheme `{s}`")))
    }
}

/// Group name to member joint names, in declaration order.
pub type GroupMap = IndexMap<String, Vec<String>>;

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSpec {
    joints: Vec<Joint>,
    convention: EulerConvention,
    dim: usize,
    groups: IndexMap<SchemeName, GroupMap>,
}

impl SkeletonSpec {
    pub fn new(joints: Vec<Joint>) -> Result<Self> {
        let lines: Vec<usize> = (1..=joints.len()).collect();
        Self::build(joints, &lines, "<joints>")
    }

    fn build(joints: Vec<Joint>, lines: &[usize], origin: &str) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::parse(origin, 0, "no joints declared"));
        }
        let mut order: Vec<usize> = (0..joints.len()).collect();
        order.sort_by_key(|&i| joints[i].start);
        let mut cursor = 0;
        for &i in &order {
            let j = &joints[i];
            if j.len == 0 {
                return Err(Error::parse(origin, lines[i], format!("joint `{}` has zero length", j.name)));
            }
            if j.start < cursor {
                return Err(Error::parse(
                    origin,
                    lines[i],
                    format!(
                        "joint `{}` overlaps the previous joint (starts at {}, expected {cursor})",
                        j.name, j.start
                    ),
                ));
            }
            if j.start > cursor {
                return Err(Error::parse(
                    origin,
                    lines[i],
                    format!("gap before joint `{}`: dims {cursor}..{} are not covered", j.name, j.start),
                ));
            }
            cursor = j.start + j.len;
        }
        let mut seen = BTreeSet::new();
        for (i, j) in joints.iter().enumerate() {
            if !seen.insert(j.name.as_str()) {
                return Err(Error::parse(origin, lines[i], format!("duplicate joint `{}`", j.name)));
            }
        }
        Ok(SkeletonSpec { joints, convention: EulerConvention::Zyx, dim: cursor, groups: IndexMap::new() })
    }

    pub fn parse_str(text: &str, origin: &str) -> Result<Self> {
        let mut joints = Vec::new();
        let mut joint_lines = Vec::new();
        let mut group_lines: Vec<(usize, SchemeName, String, Vec<String>)> = Vec::new();
        let mut convention = EulerConvention::Zyx;

        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: String| Error::parse(origin, line_no, msg);
            match tok[0] {
                "convention" => match tok.get(1).copied() {
                    Some("zyx") => convention = EulerConvention::Zyx,
                    other => return Err(bad(format!("unsupported convention {other:?}"))),
                },
                "joint" => {
                    if !(4..=5).contains(&tok.len()) {
                        return Err(bad("expected `joint <name> <start> <len> [global]`".into()));
                    }
                    let num =
                        |s: &str| s.parse::<usize>().map_err(|_| bad(format!("`{s}` is not a non-negative integer")));
                    let global = match tok.get(4).copied() {
                        None => false,
                        Some("global") => true,
                        Some(other) => return Err(bad(format!("unexpected flag `{other}`"))),
                    };
                    joints.push(Joint { name: tok[1].to_string(), start: num(tok[2])?, len: num(tok[3])?, global });
                    joint_lines.push(line_no);
                }
                "group" => {
                    if tok.len() < 4 {
                        return Err(bad("expected `group <scheme> <group-name> <joint>...`".into()));
                    }
                    let scheme: SchemeName = tok[1].parse().map_err(|e: Error| bad(e.to_string()))?;
                    if !scheme.group_names().contains(&tok[2]) {
                        return Err(bad(format!(
                            "scheme {scheme} has no group `{}` (expected one of {:?})",
                            tok[2],
                            scheme.group_names()
                        )));
                    }
                    group_lines.push((
                        line_no,
                        scheme,
                        tok[2].to_string(),
                        tok[3..].iter().map(|s| s.to_string()).collect(),
                    ));
                }
                other => return Err(bad(format!("unknown directive `{other}`"))),
            }
        }

        let mut spec = Self::build(joints, &joint_lines, origin)?;
        spec.convention = convention;
        for (line_no, scheme, group, members) in group_lines {
            for m in &members {
                if spec.joint(m).is_none() {
                    return Err(Error::parse(origin, line_no, format!("unknown joint `{m}`")));
                }
            }
            spec.groups.entry(scheme).or_default().entry(group).or_default().extend(members);
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, &path.display().to_string())
    }

    /// Render back to the description-file syntax.
    pub fn to_text(&self) -> String {
        let mut out = String::from("convention zyx\n");
        for j in &self.joints {
            out += &format!("joint {} {} {}{}\n", j.name, j.start, j.len, if j.global { " global" } else { "" });
        }
        for (scheme, groups) in &self.groups {
            for (g, members) in groups {
                out += &format!("group {scheme} {g} {}\n", members.join(" "));
            }
        }
        out
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint(&self, name: &str) -> Option<&Joint> {
        self.joints.iter().find(|j| j.name == name)
    }

    pub fn convention(&self) -> EulerConvention {
        self.convention
    }

    /// Raw feature dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn group_map(&self, scheme: SchemeName) -> Option<&GroupMap> {
        self.groups.get(&scheme)
    }

    pub fn set_group_map(&mut self, scheme: SchemeName, map: GroupMap) {
        self.groups.insert(scheme, map);
    }

    /// The group map for `scheme`: declared, or coarsened from `five_part`.
    pub fn resolved_group_map(&self, scheme: SchemeName) -> Result<GroupMap> {
        if let Some(m) = self.groups.get(&scheme) {
            return Ok(m.clone());
        }
        if scheme == SchemeName::Whole {
            let all = self.joints.iter().map(|j| j.name.clone()).collect();
            return Ok(IndexMap::from([("whole".to_string(), all)]));
        }
        let five = self.groups.get(&SchemeName::FivePart).ok_or_else(|| {
            Error::Validation(format!("skeleton declares no five_part groups to derive {scheme} from"))
        })?;
        let mut out = GroupMap::new();
        for (name, parts) in scheme.group_names().iter().zip(scheme.coarsening()) {
            let members = parts.iter().flat_map(|p| five.get(*p).cloned().unwrap_or_default()).collect();
            out.insert(name.to_string(), members);
        }
        Ok(out)
    }

    /// Partition the retained dimensions using the groups declared in this spec.
    pub fn partition(&self, scheme: SchemeName, retained: &[usize]) -> Result<PartitionScheme> {
        self.partition_with(scheme, retained, PartitionOptions::default())
    }

    pub fn partition_with(
        &self,
        scheme: SchemeName,
        retained: &[usize],
        opts: PartitionOptions,
    ) -> Result<PartitionScheme> {
        let map = self.resolved_group_map(scheme)?;
        build_partition(self, &map, scheme, retained, opts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionOptions {
    /// Place global joints missing from the group map into `torso`.
    pub global_in_torso: bool,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions { global_in_torso: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    /// Indices into the retained (preprocessed) frame, ascending.
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionScheme {
    pub name: SchemeName,
    pub groups: Vec<Group>,
    width: usize,
}

/// Assign retained dimensions to body-part groups.
///
/// `retained` lists the raw indices that survived still-dimension removal, in
/// ascending order; a group's dims are positions within that list. Joints with
/// no retained dimension may be left out of `group_map`.
pub fn build_partition(
    spec: &SkeletonSpec,
    group_map: &GroupMap,
    scheme: SchemeName,
    retained: &[usize],
    opts: PartitionOptions,
) -> Result<PartitionScheme> {
    let position: HashMap<usize, usize> = retained.iter().enumerate().map(|(p, &r)| (r, p)).collect();
    if retained.iter().any(|&r| r >= spec.dim()) {
        return Err(Error::Validation("retained index beyond skeleton dimension".into()));
    }
    for g in group_map.keys() {
        if !scheme.group_names().contains(&g.as_str()) {
            return Err(Error::Validation(format!("scheme {scheme} has no group `{g}`")));
        }
    }

    let mut owner: HashMap<&str, &str> = HashMap::new();
    for (g, members) in group_map {
        for m in members {
            if spec.joint(m).is_none() {
                return Err(Error::Validation(format!("group `{g}` names unknown joint `{m}`")));
            }
            if let Some(prev) = owner.insert(m.as_str(), g.as_str()) {
                return Err(Error::Validation(format!("joint `{m}` assigned twice (`{prev}` and `{g}`)")));
            }
        }
    }

    let torso = if scheme == SchemeName::Whole { "whole" } else { "torso" };
    let mut dims: IndexMap<&str, Vec<usize>> = scheme.group_names().iter().map(|&n| (n, Vec::new())).collect();
    for j in spec.joints() {
        let kept: Vec<usize> = (j.start..j.start + j.len).filter_map(|r| position.get(&r).copied()).collect();
        let group = match owner.get(j.name.as_str()) {
            Some(g) => *g,
            None if kept.is_empty() => continue,
            None if j.global && opts.global_in_torso => torso,
            None => return Err(Error::Validation(format!("joint `{}` is not assigned to any {scheme} group", j.name))),
        };
        dims.get_mut(group).expect("validated group name").extend(kept);
    }

    let mut groups = Vec::with_capacity(dims.len());
    for (name, mut d) in dims {
        if d.is_empty() {
            return Err(Error::Validation(format!("{scheme} group `{name}` has no retained dimensions")));
        }
        d.sort_unstable();
        groups.push(Group { name: name.to_string(), dims: d });
    }
    Ok(PartitionScheme { name: scheme, groups, width: retained.len() })
}

impl PartitionScheme {
    /// Retained frame width covered by the groups.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn group_widths(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.dims.len()).collect()
    }

    /// Split a `[rows, width]` frame batch into one tensor per group.
    pub fn scatter(&self, frame: &Tensor) -> Result<Vec<Tensor>> {
        if frame.cols() != self.width {
            return Err(Error::ShapeMismatch { op: "scatter", left: frame.shape().to_vec(), right: vec![self.width] });
        }
        self.groups.iter().map(|g| frame.select_cols(&g.dims)).collect()
    }

    /// Inverse of [`scatter`](Self::scatter).
    pub fn gather(&self, parts: &[Tensor]) -> Result<Tensor> {
        if parts.len() != self.groups.len() {
            return Err(Error::Validation(format!(
                "gather: expected {} groups, got {}",
                self.groups.len(),
                parts.len()
            )));
        }
        let rows = parts[0].rows();
        let mut data = vec![0.0; rows * self.width];
        for (g, p) in self.groups.iter().zip(parts) {
            if p.cols() != g.dims.len() || p.rows() != rows {
                return Err(Error::ShapeMismatch {
                    op: "gather",
                    left: p.shape().to_vec(),
                    right: vec![rows, g.dims.len()],
                });
            }
            for r in 0..rows {
                for (k, &c) in g.dims.iter().enumerate() {
                    data[r * self.width + c] = p.get(r, k);
                }
            }
        }
        Tensor::new(vec![rows, self.width], data)
    }
}

/// The 54-dimension skeleton used by the synthetic generator: four limbs of
/// four 3-dof joints each plus a two-joint torso whose root is global.
pub const SYNTHETIC_SKELETON: &str = "\
# 18 joints x 3 exponential-map dims
convention zyx
joint root 0 3 global
joint spine 3 3
joint l_clavicle 6 3
joint l_shoulder 9 3
joint l_elbow 12 3
joint l_wrist 15 3
joint r_clavicle 18 3
joint r_shoulder 21 3
joint r_elbow 24 3
joint r_wrist 27 3
joint l_hip 30 3
joint l_knee 33 3
joint l_ankle 36 3
joint l_toe 39 3
joint r_hip 42 3
joint r_knee 45 3
joint r_ankle 48 3
joint r_toe 51 3
group five_part left_arm l_clavicle l_shoulder l_elbow l_wrist
group five_part right_arm r_clavicle r_shoulder r_elbow r_wrist
group five_part left_leg l_hip l_knee l_ankle l_toe
group five_part right_leg r_hip r_knee r_ankle r_toe
group five_part torso root spine
";

pub fn synthetic_skeleton() -> SkeletonSpec {
    SkeletonSpec::parse_str(SYNTHETIC_SKELETON, "<synthetic>").expect("built-in skeleton parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all(spec: &SkeletonSpec) -> Vec<usize> {
        (0..spec.dim()).collect()
    }

    #[test]
    fn five_part_sizes_on_synthetic() {
        let s = synthetic_skeleton();
        assert_eq!(s.dim(), 54);
        let p = s.partition(SchemeName::FivePart, &all(&s)).unwrap();
        assert_eq!(p.group_widths(), vec![12, 12, 12, 12, 6]);
        assert_eq!(p.group_widths().iter().sum::<usize>(), 54);
    }

    #[test]
    fn toy_one_joint_per_group() {
        let text = "joint a 0 2\njoint b 2 1\njoint c 3 3\njoint d 6 1\njoint e 7 2\n\
                    group five_part left_arm a\ngroup five_part right_arm b\n\
                    group five_part left_leg c\ngroup five_part right_leg d\ngroup five_part torso e\n";
        let s = SkeletonSpec::parse_str(text, "toy").unwrap();
        let p = s.partition(SchemeName::FivePart, &all(&s)).unwrap();
        let dims: Vec<_> = p.groups.iter().map(|g| g.dims.clone()).collect();
        assert_eq!(dims, vec![vec![0, 1], vec![2], vec![3, 4, 5], vec![6], vec![7, 8]]);
    }

    #[test]
    fn omitted_joint_is_named() {
        let text = "joint a 0 3\njoint b 3 3\njoint c 6 3\njoint d 9 3\njoint e 12 3\njoint f 15 3\n\
                    group five_part left_arm a\ngroup five_part right_arm b\n\
                    group five_part left_leg c\ngroup five_part right_leg d\ngroup five_part torso e\n";
        let s = SkeletonSpec::parse_str(text, "toy").unwrap();
        let err = s.partition(SchemeName::FivePart, &all(&s)).unwrap_err().to_string();
        assert!(err.contains("`f`"), "{err}");
    }

    #[test]
    fn double_assignment_and_empty_group() {
        let s = synthetic_skeleton();
        let mut map = s.resolved_group_map(SchemeName::FivePart).unwrap();
        map["torso"].push("l_wrist".into());
        let err = build_partition(&s, &map, SchemeName::FivePart, &all(&s), PartitionOptions::default());
        assert!(err.unwrap_err().to_string().contains("twice"));

        // drop every left-arm dimension as still: the group becomes empty
        let retained: Vec<usize> = (0..54).filter(|i| !(6..18).contains(i)).collect();
        let err = s.partition(SchemeName::FivePart, &retained).unwrap_err();
        assert!(err.to_string().contains("left_arm"));
    }

    #[test]
    fn global_root_goes_to_torso_unless_disabled() {
        let s = synthetic_skeleton();
        let mut map = s.resolved_group_map(SchemeName::FivePart).unwrap();
        map["torso"].retain(|j| j != "root");
        let p = build_partition(&s, &map, SchemeName::FivePart, &all(&s), PartitionOptions::default()).unwrap();
        assert_eq!(p.groups[4].dims, vec![0, 1, 2, 3, 4, 5]);
        let off = PartitionOptions { global_in_torso: false };
        assert!(build_partition(&s, &map, SchemeName::FivePart, &all(&s), off).is_err());
    }

    #[test]
    fn parser_reports_gaps_and_overlaps_with_lines() {
        let gap = SkeletonSpec::parse_str("joint a 0 3\n# c\njoint b 4 3\n", "f.skel").unwrap_err();
        assert!(gap.to_string().starts_with("f.skel:3:"), "{gap}");
        let overlap = SkeletonSpec::parse_str("joint a 0 3\njoint b 2 3\n", "f.skel").unwrap_err();
        assert!(overlap.to_string().starts_with("f.skel:2:"), "{overlap}");
        let unknown = SkeletonSpec::parse_str("joint a 0 3\ngroup whole whole z\n", "f.skel").unwrap_err();
        assert!(unknown.to_string().contains("f.skel:2:"));
    }

    #[test]
    fn three_branch_schemes_coarsen_five_part() {
        let s = synthetic_skeleton();
        let five = s.partition(SchemeName::FivePart, &all(&s)).unwrap();
        let g = |p: &PartitionScheme, name: &str| p.groups.iter().find(|g| g.name == name).unwrap().dims.clone();
        let union = |a: &str, b: &str| {
            let mut v = [g(&five, a), g(&five, b)].concat();
            v.sort();
            v
        };
        let lr = s.partition(SchemeName::LrThree, &all(&s)).unwrap();
        assert_eq!(lr.groups.len(), 3);
        assert_eq!(g(&lr, "left"), union("left_arm", "left_leg"));
        assert_eq!(g(&lr, "right"), union("right_arm", "right_leg"));
        let ud = s.partition(SchemeName::UdThree, &all(&s)).unwrap();
        assert_eq!(g(&ud, "arms"), union("left_arm", "right_arm"));
        assert_eq!(g(&ud, "legs"), union("left_leg", "right_leg"));
        assert_eq!(g(&ud, "torso"), g(&five, "torso"));
    }

    #[test]
    fn whole_scatter_is_identity() {
        let s = synthetic_skeleton();
        let p = s.partition(SchemeName::Whole, &all(&s)).unwrap();
        let x = Tensor::new(vec![2, 54], (0..108).map(|i| i as f64 * 0.5).collect()).unwrap();
        let parts = p.scatter(&x).unwrap();
        assert_eq!(parts.len(), 1);
        assert!(parts[0].bit_eq(&x));
    }

    #[test]
    fn text_round_trip() {
        let s = synthetic_skeleton();
        let again = SkeletonSpec::parse_str(&s.to_text(), "again").unwrap();
        assert_eq!(again, s);
    }

    proptest! {
        #[test]
        fn disjoint_cover_and_bijection(
            mask in proptest::collection::vec(proptest::bool::weighted(0.85), 54),
            values in proptest::collection::vec(-10.0f64..10.0, 54 * 2),
        ) {
            let s = synthetic_skeleton();
            let retained: Vec<usize> = (0..54).filter(|&i| mask[i]).collect();
            for scheme in SchemeName::ALL {
                let Ok(p) = s.partition(scheme, &retained) else { continue };
                let mut idx: Vec<usize> = p.groups.iter().flat_map(|g| g.dims.clone()).collect();
                idx.sort();
                prop_assert_eq!(idx, (0..retained.len()).collect::<Vec<_>>());
                let w = retained.len();
                let x = Tensor::new(vec![2, w], values[..2 * w].to_vec()).unwrap();
                let back = p.gather(&p.scatter(&x).unwrap()).unwrap();
                prop_assert!(back.bit_eq(&x));
            }
        }
    }
}
