use serde::{Deserialize, Serialize};

use super::world::Cell;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::N, Heading::E, Heading::S, Heading::W];

    /// Unit step in map coordinates (y grows southwards).
    pub fn delta(self) -> (i64, i64) {
        match self {
            Heading::N => (0, -1),
            Heading::E => (1, 0),
            Heading::S => (0, 1),
            Heading::W => (-1, 0),
        }
    }

    pub fn left(self) -> Heading {
        match self {
            Heading::N => Heading::W,
            Heading::W => Heading::S,
            Heading::S => Heading::E,
            Heading::E => Heading::N,
        }
    }

    pub fn right(self) -> Heading {
        self.left().left().left()
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pose {
    pub x: usize,
    pub y: usize,
    pub heading: Heading,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    Forward,
    TurnLeft,
    TurnRight,
}

impl Move {
    /// Fixed expansion order; A* tie-breaking depends on it.
    pub const ORDER: [Move; 3] = [Move::Forward, Move::TurnLeft, Move::TurnRight];
}

impl Pose {
    pub fn new(x: usize, y: usize, heading: Heading) -> Self {
        Self { x, y, heading }
    }

    pub fn cell(&self) -> Cell {
        Cell::new(self.x, self.y)
    }

    /// Pose after applying `mv`, ignoring walls. `None` if it leaves the
    /// non-negative quadrant.
    pub fn apply(&self, mv: Move) -> Option<Pose> {
        match mv {
            Move::TurnLeft => Some(Pose { heading: self.heading.left(), ..*self }),
            Move::TurnRight => Some(Pose { heading: self.heading.right(), ..*self }),
            Move::Forward => {
                let (dx, dy) = self.heading.delta();
                let (nx, ny) = (self.x as i64 + dx, self.y as i64 + dy);
                (nx >= 0 && ny >= 0).then(|| Pose { x: nx as usize, y: ny as usize, heading: self.heading })
            }
        }
    }

    /// The move that takes `self` to `next`, if they differ by one legal move.
    pub fn move_to(&self, next: &Pose) -> Option<Move> {
        Move::ORDER.into_iter().find(|&m| self.apply(m).as_ref() == Some(next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn turns_compose() {
        for h in Heading::ALL {
            assert_eq!(h.left().right(), h);
            assert_eq!(h.left().left().left().left(), h);
        }
        assert_eq!(Heading::N.right(), Heading::E);
    }

    #[test]
    fn move_to_recovers_move() {
        let p = Pose::new(3, 3, Heading::E);
        assert_eq!(p.move_to(&Pose::new(4, 3, Heading::E)), Some(Move::Forward));
        assert_eq!(p.move_to(&Pose::new(3, 3, Heading::N)), Some(Move::TurnLeft));
        assert_eq!(p.move_to(&Pose::new(3, 3, Heading::S)), Some(Move::TurnRight));
        assert_eq!(p.move_to(&Pose::new(5, 3, Heading::E)), None);
    }
}
