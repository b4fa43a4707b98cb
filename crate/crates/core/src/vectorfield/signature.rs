use std::collections::HashMap;

use super::SignatureError;

/// A resolved variable slot. Parameters are addressed by their position in
/// the flattened parameter vector (all groups concatenated in order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    State(usize),
    Param(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub dim: usize,
}

/// State dimension plus the ordered control groups a field reads.
///
/// State variables are always reachable as `x1..xn`; optional custom names
/// add aliases. A group `u` of dimension `d` declares `u1..ud`, and plain
/// `u` as well when `d == 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSignature {
    state_dim: usize,
    state_names: Option<Vec<String>>,
    groups: Vec<ParamGroup>,
    offsets: Vec<usize>,
    names: HashMap<String, Var>,
}

impl FieldSignature {
    pub fn new(state_dim: usize, groups: Vec<(String, usize)>) -> Result<Self, SignatureError> {
        Self::build(state_dim, None, groups)
    }

    pub fn with_state_names(names: Vec<String>, groups: Vec<(String, usize)>) -> Result<Self, SignatureError> {
        Self::build(names.len(), Some(names), groups)
    }

    fn build(
        state_dim: usize,
        state_names: Option<Vec<String>>,
        groups: Vec<(String, usize)>,
    ) -> Result<Self, SignatureError> {
        if state_dim == 0 {
            return Err(SignatureError::ZeroStateDim);
        }
        let mut names = HashMap::new();
        let mut declare = |name: String, var: Var| -> Result<(), SignatureError> {
            if !is_identifier(&name) {
                return Err(SignatureError::BadName(name));
            }
            match names.insert(name.clone(), var) {
                Some(prev) if prev != var => Err(SignatureError::Duplicate(name)),
                _ => Ok(()),
            }
        };
        for i in 0..state_dim {
            declare(format!("x{}", i + 1), Var::State(i))?;
        }
        if let Some(custom) = &state_names {
            for (i, n) in custom.iter().enumerate() {
                declare(n.clone(), Var::State(i))?;
            }
        }
        let mut offsets = Vec::with_capacity(groups.len());
        let mut offset = 0;
        let mut seen = Vec::new();
        for (name, dim) in &groups {
            if *dim == 0 {
                return Err(SignatureError::ZeroGroupDim(name.clone()));
            }
            if seen.contains(name) {
                return Err(SignatureError::Duplicate(name.clone()));
            }
            seen.push(name.clone());
            offsets.push(offset);
            for j in 0..*dim {
                declare(format!("{name}{}", j + 1), Var::Param(offset + j))?;
            }
            if *dim == 1 {
                declare(name.clone(), Var::Param(offset))?;
            }
            offset += dim;
        }
        Ok(FieldSignature {
            state_dim,
            state_names,
            groups: groups.into_iter().map(|(name, dim)| ParamGroup { name, dim }).collect(),
            offsets,
            names,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn state_names(&self) -> Option<&[String]> {
        self.state_names.as_deref()
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    /// Offset of group `g` inside the flattened parameter vector.
    pub fn group_offset(&self, g: usize) -> usize {
        self.offsets[g]
    }

    pub fn param_len(&self) -> usize {
        self.groups.iter().map(|g| g.dim).sum()
    }

    pub fn resolve(&self, name: &str) -> Option<Var> {
        self.names.get(name).copied()
    }

    /// Canonical printable name of a slot.
    pub fn var_name(&self, var: Var) -> String {
        match var {
            Var::State(i) => match &self.state_names {
                Some(n) => n[i].clone(),
                None => format!("x{}", i + 1),
            },
            Var::Param(flat) => {
                let g = self.offsets.iter().rposition(|&o| o <= flat).expect("param slot in range");
                format!("{}{}", self.groups[g].name, flat - self.offsets[g] + 1)
            }
        }
    }

    /// Concatenates per-group vectors into the flat parameter layout.
    pub fn flatten(&self, per_group: &[&[f64]]) -> Result<Vec<f64>, SignatureError> {
        if per_group.len() != self.groups.len() {
            return Err(SignatureError::GroupCount { expected: self.groups.len(), got: per_group.len() });
        }
        let mut flat = Vec::with_capacity(self.param_len());
        for (g, values) in self.groups.iter().zip(per_group) {
            if values.len() != g.dim {
                return Err(SignatureError::GroupDim { group: g.name.clone(), expected: g.dim, got: values.len() });
            }
            flat.extend_from_slice(values);
        }
        Ok(flat)
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_') && chars.all(|c| c.is_alphanumeric() || c == '_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_resolve() {
        let sig =
            FieldSignature::with_state_names(vec!["y".into(), "z".into()], vec![("u".into(), 1), ("w".into(), 2)])
                .unwrap();
        assert_eq!(sig.resolve("z"), Some(Var::State(1)));
        assert_eq!(sig.resolve("x2"), Some(Var::State(1)));
        assert_eq!(sig.resolve("u"), Some(Var::Param(0)));
        assert_eq!(sig.resolve("u1"), Some(Var::Param(0)));
        assert_eq!(sig.resolve("w2"), Some(Var::Param(2)));
        assert_eq!(sig.resolve("w"), None);
        assert_eq!(sig.var_name(Var::Param(2)), "w2");
        assert_eq!(sig.var_name(Var::State(0)), "y");
        assert_eq!(sig.flatten(&[&[1.0], &[2.0, 3.0]]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(sig.flatten(&[&[1.0], &[2.0]]).is_err());
    }

    #[test]
    fn rejects_bad_signatures() {
        assert_eq!(FieldSignature::new(0, vec![]), Err(SignatureError::ZeroStateDim));
        assert!(matches!(
            FieldSignature::new(1, vec![("u".into(), 1), ("u".into(), 2)]),
            Err(SignatureError::Duplicate(_))
        ));
        assert!(matches!(FieldSignature::new(1, vec![("u".into(), 0)]), Err(SignatureError::ZeroGroupDim(_))));
        // group "x" would declare x1, which is the first state variable
        assert!(matches!(FieldSignature::new(1, vec![("x".into(), 1)]), Err(SignatureError::Duplicate(_))));
    }
}
