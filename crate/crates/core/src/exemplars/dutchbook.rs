//! Gains of a bettor on the two-outcome set {A, Ā} against a bookie who sets
//! the payoffs. Probabilities are whatever the bettor announces, including
//! values outside [0, 1].

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetSpec {
    pub p_a: f64,
    /// Announced probability for Ā; `None` means 1 − p_A.
    pub p_not_a: Option<f64>,
    pub stake_a: f64,
    pub stake_not_a: f64,
}

impl BetSpec {
    /// Bookie pays off only if A occurs (S_Ā = 0).
    pub fn on_a_only(p_a: f64, stake_a: f64) -> Self {
        BetSpec {
            p_a,
            p_not_a: None,
            stake_a,
            stake_not_a: 0.0,
        }
    }

    pub fn p_not_a(&self) -> f64 {
        self.p_not_a.unwrap_or(1.0 - self.p_a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gains {
    /// G_A: gain if A occurs.
    pub if_a: f64,
    /// G_Ā: gain if A does not occur.
    pub if_not_a: f64,
}

impl Gains {
    pub fn sure_loss(&self) -> bool {
        self.if_a < 0.0 && self.if_not_a < 0.0
    }
}

/// G_A = S_A − p_A S_A − p_Ā S_Ā, G_Ā = S_Ā − p_Ā S_Ā − p_A S_A.
/// With S_Ā = 0 these are (1 − p_A) S_A and −p_A S_A.
pub fn dutch_book_gains(bet: &BetSpec) -> Gains {
    if bet.stake_not_a == 0.0 {
        return Gains {
            if_a: (1.0 - bet.p_a) * bet.stake_a,
            if_not_a: -bet.p_a * bet.stake_a,
        };
    }
    let paid = bet.p_a * bet.stake_a + bet.p_not_a() * bet.stake_not_a;
    Gains {
        if_a: bet.stake_a - paid,
        if_not_a: bet.stake_not_a - paid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fair_bet_shape() {
        let g = dutch_book_gains(&BetSpec::on_a_only(0.3, 10.0));
        assert!(g.if_a > 0.0 && g.if_not_a < 0.0);
        assert!((g.if_a - 7.0).abs() < 1e-14);
        assert!((g.if_not_a + 3.0).abs() < 1e-14);
    }

    #[test]
    fn negative_probability_is_a_sure_loss() {
        let bet = BetSpec::on_a_only(-0.25, -8.0);
        let g = dutch_book_gains(&bet);
        assert!(g.sure_loss());
        assert!((g.if_a.abs() - 8.0 * 1.25).abs() < 1e-14);
    }

    #[test]
    fn general_form_reduces_when_stake_not_a_vanishes() {
        let bet = BetSpec {
            p_a: 0.4,
            p_not_a: Some(0.6),
            stake_a: 3.0,
            stake_not_a: 2.0,
        };
        let g = dutch_book_gains(&bet);
        assert!((g.if_a - (3.0 - 1.2 - 1.2)).abs() < 1e-14);
        assert!((g.if_not_a - (2.0 - 1.2 - 1.2)).abs() < 1e-14);
    }
}
