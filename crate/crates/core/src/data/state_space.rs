use crate::error::{Error, Result};

/// The Cartesian product of factor label spaces, enumerated
/// lexicographically with the first factor most significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    cards: Vec<usize>,
}

impl StateSpace {
    pub fn new(cards: Vec<usize>) -> Result<Self> {
        if cards.is_empty() {
            return Err(Error::Validation("state space needs at least one factor".into()));
        }
        if cards.iter().any(|&c| c == 0) {
            return Err(Error::Validation("factor with an empty label space".into()));
        }
        Ok(Self { cards })
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn len(&self) -> usize {
        self.cards.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn config(&self, mut index: usize) -> Vec<u32> {
        let mut out = vec![0u32; self.cards.len()];
        for (slot, &c) in out.iter_mut().zip(&self.cards).rev() {
            *slot = (index % c) as u32;
            index /= c;
        }
        out
    }

    pub fn index(&self, labels: &[u32]) -> Result<usize> {
        if labels.len() != self.cards.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} factors",
                labels.len(),
                self.cards.len()
            )));
        }
        let mut idx = 0;
        for (&l, &c) in labels.iter().zip(&self.cards) {
            if l as usize >= c {
                return Err(Error::Validation(format!("label {l} >= cardinality {c}")));
            }
            idx = idx * c + l as usize;
        }
        Ok(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<u32>> + '_ {
        (0..self.len()).map(|i| self.config(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(StateSpace::new(vec![3, 2, 2]).unwrap().len(), 12);
        assert_eq!(StateSpace::new(vec![4, 3, 9, 6, 2]).unwrap().len(), 1296);
        assert_eq!(StateSpace::new(vec![1]).unwrap().len(), 1);
        assert!(StateSpace::new(vec![]).is_err());
    }

    #[test]
    fn lexicographic_order() {
        let s = StateSpace::new(vec![2, 3]).unwrap();
        let all: Vec<Vec<u32>> = s.iter().collect();
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[1], vec![0, 1]);
        assert_eq!(all[3], vec![1, 0]);
        for (i, c) in all.iter().enumerate() {
            assert_eq!(s.index(c).unwrap(), i);
        }
    }
}
