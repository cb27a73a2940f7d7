//! First-order unification over type terms. Trace variables are written as
//! `TypeTag::Param(v)` and index the binding table.

use std::collections::BTreeSet;

use crate::model::TypeTag;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Unifier {
    bind: Vec<Option<TypeTag>>,
}

impl Unifier {
    pub fn fresh(&mut self) -> Option<TypeTag> {
        if self.bind.len() >= u16::MAX as usize {
            return None;
        }
        self.bind.push(None);
        Some(TypeTag::Param(self.bind.len() as u16 - 1))
    }

    pub fn len(&self) -> usize {
        self.bind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bind.is_empty()
    }

    /// Fully applies the current bindings.
    pub fn resolve(&self, t: &TypeTag) -> TypeTag {
        match t {
            TypeTag::Param(v) => match self.bind.get(*v as usize).and_then(|b| b.as_ref()) {
                Some(b) => self.resolve(b),
                None => t.clone(),
            },
            TypeTag::Prim(_) => t.clone(),
            TypeTag::Vector(e) => TypeTag::vector(self.resolve(e)),
            TypeTag::Datatype(r, args) => TypeTag::Datatype(r.clone(), args.iter().map(|a| self.resolve(a)).collect()),
        }
    }

    pub fn free_vars(&self, t: &TypeTag, out: &mut BTreeSet<u16>) {
        self.resolve(t).params(out);
    }

    /// Unifies two terms. Bindings made before a failure are kept, so
    /// callers that need atomicity unify on a copy.
    pub fn unify(&mut self, a: &TypeTag, b: &TypeTag) -> bool {
        let a = self.resolve(a);
        let b = self.resolve(b);
        match (&a, &b) {
            (TypeTag::Param(x), TypeTag::Param(y)) if x == y => true,
            (TypeTag::Param(x), t) | (t, TypeTag::Param(x)) => {
                let mut vs = BTreeSet::new();
                t.params(&mut vs);
                if vs.contains(x) {
                    return false;
                }
                self.bind[*x as usize] = Some(t.clone());
                true
            }
            (TypeTag::Prim(p), TypeTag::Prim(q)) => p == q,
            (TypeTag::Vector(x), TypeTag::Vector(y)) => self.unify(x, y),
            (TypeTag::Datatype(r1, a1), TypeTag::Datatype(r2, a2)) => {
                r1 == r2 && a1.len() == a2.len() && a1.iter().zip(a2).all(|(x, y)| self.unify(x, y))
            }
            _ => false,
        }
    }

    /// Unifies atomically: on failure the bindings are unchanged.
    pub fn try_unify(&mut self, a: &TypeTag, b: &TypeTag) -> bool {
        let mut trial = self.clone();
        if trial.unify(a, b) {
            *self = trial;
            true
        } else {
            false
        }
    }

    /// True when the terms could be unified, without binding anything.
    pub fn unifiable(&self, a: &TypeTag, b: &TypeTag) -> bool {
        self.clone().unify(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Prim;

    fn coin(t: TypeTag) -> TypeTag {
        TypeTag::datatype("coin", "Coin", vec![t])
    }

    #[test]
    fn binds_through_chains() {
        let mut u = Unifier::default();
        let a = u.fresh().unwrap();
        let b = u.fresh().unwrap();
        assert!(u.unify(&coin(a.clone()), &coin(b.clone())));
        assert!(u.unify(&b, &TypeTag::Prim(Prim::U8)));
        assert_eq!(u.resolve(&a), TypeTag::Prim(Prim::U8));
    }

    #[test]
    fn rejects_clash_and_cycle() {
        let mut u = Unifier::default();
        let a = u.fresh().unwrap();
        assert!(!u.try_unify(&a, &coin(a.clone())));
        assert!(u.try_unify(&a, &TypeTag::u64()));
        assert!(!u.try_unify(&a, &TypeTag::Prim(Prim::Bool)));
        assert_eq!(u.resolve(&a), TypeTag::u64());
    }
}
