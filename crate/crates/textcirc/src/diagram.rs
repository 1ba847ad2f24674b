//! Text diagrams: ordered generators (states, boxes, effects, discards) over
//! noun wires, read top to bottom. One wire per actor; sentences become boxes
//! on their subject wires; the question becomes a two-wire effect and all
//! other wires are discarded.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::story::{Direction, Polarity, Sentence, Story, Verb};
pub use crate::story::Dialect;

pub type WireId = usize;

/// Closed vocabulary. All actor names map to `Person`; `TurnsRight` carries
/// no parameters of its own (it is realised as the adjoint of `TurnsLeft`)
/// and `OppositeDirectionOf` never reaches the functor (it is rewritten into
/// `Follows` + `TurnsAround`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Word {
    Person,
    WalksNorth,
    WalksSouth,
    WalksEast,
    WalksWest,
    TurnsLeft,
    TurnsRight,
    TurnsAround,
    Follows,
    OppositeDirectionOf,
    SameDir,
    NotSameDir,
}

impl Word {
    pub fn walks(direction: Direction) -> Word {
        match direction {
            Direction::North => Word::WalksNorth,
            Direction::South => Word::WalksSouth,
            Direction::East => Word::WalksEast,
            Direction::West => Word::WalksWest,
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Word::Follows | Word::OppositeDirectionOf | Word::SameDir | Word::NotSameDir => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    State(Word),
    Box(Word),
    Effect(Word),
    Discard,
    Identity,
    Swap,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generator {
    pub kind: GeneratorKind,
    pub wires: Vec<WireId>,
}

impl Generator {
    pub fn state(word: Word, wire: WireId) -> Self {
        Generator { kind: GeneratorKind::State(word), wires: vec![wire] }
    }
    pub fn boxed(word: Word, wires: Vec<WireId>) -> Self {
        Generator { kind: GeneratorKind::Box(word), wires }
    }
    pub fn effect(word: Word, wires: Vec<WireId>) -> Self {
        Generator { kind: GeneratorKind::Effect(word), wires }
    }
    pub fn discard(wire: WireId) -> Self {
        Generator { kind: GeneratorKind::Discard, wires: vec![wire] }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextDiagram {
    pub dialect: Dialect,
    /// Actor id carried by each noun wire; wire index = position here.
    pub wire_actors: Vec<usize>,
    pub layers: Vec<Generator>,
    pub question_wires: (WireId, WireId),
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum Violation {
    #[error("wire {0}: duplicate initialisation")]
    DuplicateState(WireId),
    #[error("wire {0}: no initialisation")]
    MissingState(WireId),
    #[error("wire {0}: generator precedes its state")]
    GeneratorBeforeState(WireId),
    #[error("layer {0}: arity mismatch ({1} wires for {2:?})")]
    ArityMismatch(usize, usize, GeneratorKind),
    #[error("layer {0}: unknown or repeated wire")]
    BadWires(usize),
    #[error("wire {0}: generator after the terminal layer")]
    GeneratorAfterTerminal(WireId),
    #[error("wire {0}: missing terminal discard")]
    MissingDiscard(WireId),
    #[error("question wires invalid or missing terminal effect")]
    BadQuestion,
}

impl TextDiagram {
    pub fn num_wires(&self) -> usize {
        self.wire_actors.len()
    }

    /// Check all structural invariants, returning the violations found.
    pub fn validate(&self) -> Vec<Violation> {
        let n = self.num_wires();
        let mut out = Vec::new();
        let mut state_seen = vec![false; n];
        let mut terminated = vec![false; n];
        let mut effect_ok = false;
        for (li, g) in self.layers.iter().enumerate() {
            let expected = match &g.kind {
                GeneratorKind::State(w) | GeneratorKind::Box(w) | GeneratorKind::Effect(w) => {
                    w.arity()
                }
                GeneratorKind::Discard | GeneratorKind::Identity => 1,
                GeneratorKind::Swap => 2,
            };
            if g.wires.len() != expected {
                out.push(Violation::ArityMismatch(li, g.wires.len(), g.kind.clone()));
                continue;
            }
            if g.wires.iter().any(|&w| w >= n)
                || (g.wires.len() == 2 && g.wires[0] == g.wires[1])
            {
                out.push(Violation::BadWires(li));
                continue;
            }
            for &w in &g.wires {
                if terminated[w] {
                    out.push(Violation::GeneratorAfterTerminal(w));
                }
            }
            match &g.kind {
                GeneratorKind::State(_) => {
                    let w = g.wires[0];
                    if state_seen[w] {
                        out.push(Violation::DuplicateState(w));
                    }
                    state_seen[w] = true;
                }
                GeneratorKind::Discard => {
                    terminated[g.wires[0]] = true;
                    if !state_seen[g.wires[0]] {
                        out.push(Violation::GeneratorBeforeState(g.wires[0]));
                    }
                }
                GeneratorKind::Effect(_) => {
                    for &w in &g.wires {
                        terminated[w] = true;
                        if !state_seen[w] {
                            out.push(Violation::GeneratorBeforeState(w));
                        }
                    }
                    if (g.wires[0], g.wires[1]) == self.question_wires {
                        effect_ok = true;
                    }
                }
                _ => {
                    for &w in &g.wires {
                        if !state_seen[w] {
                            out.push(Violation::GeneratorBeforeState(w));
                        }
                    }
                }
            }
        }
        for w in 0..n {
            if !state_seen[w] {
                out.push(Violation::MissingState(w));
            }
            if !terminated[w] {
                out.push(Violation::MissingDiscard(w));
            }
        }
        let (qa, qb) = self.question_wires;
        if qa >= n || qb >= n || qa == qb || !effect_ok {
            out.push(Violation::BadQuestion);
        }
        out
    }

    /// Recover the sentence list from the diagram's boxes (states and the
    /// terminal layer are skipped). Used to re-check labels after rewrites.
    pub fn to_sentences(&self) -> Vec<Sentence> {
        self.layers
            .iter()
            .filter_map(|g| match &g.kind {
                GeneratorKind::Box(word) => {
                    let subject = self.wire_actors[g.wires[0]];
                    let verb = match word {
                        Word::WalksNorth => Verb::WalksDir(Direction::North),
                        Word::WalksSouth => Verb::WalksDir(Direction::South),
                        Word::WalksEast => Verb::WalksDir(Direction::East),
                        Word::WalksWest => Verb::WalksDir(Direction::West),
                        Word::TurnsLeft => Verb::TurnsLeft,
                        Word::TurnsRight => Verb::TurnsRight,
                        Word::TurnsAround => Verb::TurnsAround,
                        Word::Follows => Verb::Follows(self.wire_actors[g.wires[1]]),
                        Word::OppositeDirectionOf => {
                            Verb::OppositeDirectionOf(self.wire_actors[g.wires[1]])
                        }
                        _ => return None,
                    };
                    Some(Sentence::new(subject, verb))
                }
                _ => None,
            })
            .collect()
    }

    /// Graphviz-style text dump for docs and debugging.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "diagram {{ wires: {}, question: {:?} }}\n",
            self.num_wires(),
            self.question_wires
        ));
        for (i, g) in self.layers.iter().enumerate() {
            out.push_str(&format!("  L{i:03} {:?} on {:?}\n", g.kind, g.wires));
        }
        out
    }
}

/// Build the text diagram of a story: one wire per actor, a `Person` state
/// opening each wire, one box per sentence, then the question effect and
/// discards. Swaps are never inserted; two-wire boxes address their wires
/// directly.
pub fn parse_story(story: &Story) -> TextDiagram {
    let mut layers = Vec::with_capacity(story.width * 2 + story.sentences.len());
    for a in 0..story.width {
        layers.push(Generator::state(Word::Person, a));
    }
    for s in &story.sentences {
        let gen = match s.verb {
            Verb::WalksDir(d) => Generator::boxed(Word::walks(d), vec![s.subject]),
            Verb::TurnsLeft => Generator::boxed(Word::TurnsLeft, vec![s.subject]),
            Verb::TurnsRight => Generator::boxed(Word::TurnsRight, vec![s.subject]),
            Verb::TurnsAround => Generator::boxed(Word::TurnsAround, vec![s.subject]),
            Verb::Follows(o) => Generator::boxed(Word::Follows, vec![s.subject, o]),
            Verb::OppositeDirectionOf(o) => {
                Generator::boxed(Word::OppositeDirectionOf, vec![s.subject, o])
            }
        };
        layers.push(gen);
    }
    let (qa, qb) = (story.question.a, story.question.b);
    for a in 0..story.width {
        if a != qa && a != qb {
            layers.push(Generator::discard(a));
        }
    }
    let word = match story.question.polarity {
        Polarity::Same => Word::SameDir,
        Polarity::NotSame => Word::NotSameDir,
    };
    layers.push(Generator::effect(word, vec![qa, qb]));
    TextDiagram {
        dialect: story.dialect,
        wire_actors: (0..story.width).collect(),
        layers,
        question_wires: (qa, qb),
    }
}

/// Apply the hardcoded semantic rewrites: `opposite direction of` becomes
/// `follows` then `turns around` on the subject; in the four-directional
/// dialect `turns around` additionally becomes two `turns left`. `turns
/// right` stays in the diagram and is realised as the adjoint of `turns
/// left` by the functor. Idempotent.
pub fn apply_rewrites(diagram: &TextDiagram, dialect: Dialect) -> TextDiagram {
    fn expand(g: Generator, dialect: Dialect, out: &mut Vec<Generator>) {
        match (&g.kind, dialect) {
            (GeneratorKind::Box(Word::OppositeDirectionOf), _) => {
                let follows = Generator::boxed(Word::Follows, g.wires.clone());
                out.push(follows);
                expand(Generator::boxed(Word::TurnsAround, vec![g.wires[0]]), dialect, out);
            }
            (GeneratorKind::Box(Word::TurnsAround), Dialect::FourDir) => {
                out.push(Generator::boxed(Word::TurnsLeft, g.wires.clone()));
                out.push(Generator::boxed(Word::TurnsLeft, g.wires));
            }
            _ => out.push(g),
        }
    }
    let mut layers = Vec::with_capacity(diagram.layers.len());
    for g in &diagram.layers {
        expand(g.clone(), dialect, &mut layers);
    }
    TextDiagram { layers, ..diagram.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::story::{example_three_actor_story, generate_simple, DepthPolicy};
    use crate::story::{evaluate_oracle, final_directions};

    fn init_only_diagram() -> TextDiagram {
        TextDiagram {
            dialect: Dialect::TwoDir,
            wire_actors: vec![0, 1],
            layers: vec![
                Generator::state(Word::Person, 0),
                Generator::state(Word::Person, 1),
                Generator::effect(Word::SameDir, vec![0, 1]),
            ],
            question_wires: (0, 1),
        }
    }

    #[test]
    fn init_only_diagram_shape() {
        let d = init_only_diagram();
        assert!(d.validate().is_empty());
        let states = d.layers.iter().filter(|g| matches!(g.kind, GeneratorKind::State(_))).count();
        let boxes = d.layers.iter().filter(|g| matches!(g.kind, GeneratorKind::Box(_))).count();
        let effects = d.layers.iter().filter(|g| matches!(g.kind, GeneratorKind::Effect(_))).count();
        assert_eq!((states, boxes, effects), (2, 0, 1));
    }

    #[test]
    fn example_story_diagram_counts() {
        let story = example_three_actor_story();
        let d = parse_story(&story);
        assert!(d.validate().is_empty());
        let states = d.layers.iter().filter(|g| matches!(g.kind, GeneratorKind::State(_))).count();
        let single_boxes = d
            .layers
            .iter()
            .filter(|g| matches!(g.kind, GeneratorKind::Box(_)) && g.wires.len() == 1)
            .count();
        let two_boxes = d
            .layers
            .iter()
            .filter(|g| matches!(g.kind, GeneratorKind::Box(_)) && g.wires.len() == 2)
            .count();
        let discards = d.layers.iter().filter(|g| g.kind == GeneratorKind::Discard).count();
        let effects = d
            .layers
            .iter()
            .filter(|g| matches!(g.kind, GeneratorKind::Effect(_)) && g.wires.len() == 2)
            .count();
        assert_eq!((states, single_boxes, two_boxes, discards, effects), (3, 5, 2, 1, 1));
    }

    #[test]
    fn layer_count_matches_construction() {
        let stories = generate_simple(Dialect::FourDir, 2..=8, DepthPolicy::Simple, 20, 3).unwrap();
        for s in &stories {
            let d = parse_story(s);
            let expected = s.width + s.sentences.len() + (s.width - 2) + 1;
            assert_eq!(d.layers.len(), expected);
        }
    }

    #[test]
    fn rewrites_expand_opposite_direction() {
        let story = example_three_actor_story();
        let d = apply_rewrites(&parse_story(&story), Dialect::TwoDir);
        // opposite_direction_of gone, replaced by follows + around in order
        let words: Vec<_> = d
            .layers
            .iter()
            .filter_map(|g| match &g.kind {
                GeneratorKind::Box(w) => Some(*w),
                _ => None,
            })
            .collect();
        assert!(!words.contains(&Word::OppositeDirectionOf));
        let pos_follows = words.iter().rposition(|w| *w == Word::Follows).unwrap();
        assert_eq!(words[pos_follows + 1], Word::TurnsAround);
    }

    #[test]
    fn four_dir_rewrites_split_turns_around() {
        let story = example_three_actor_story();
        let d = apply_rewrites(&parse_story(&story), Dialect::FourDir);
        let words: Vec<_> = d
            .layers
            .iter()
            .filter_map(|g| match &g.kind {
                GeneratorKind::Box(w) => Some(*w),
                _ => None,
            })
            .collect();
        assert!(!words.contains(&Word::TurnsAround));
        assert!(!words.contains(&Word::OppositeDirectionOf));
        // the rewritten opp-dir contributes follows + left + left
        let n_left = words.iter().filter(|w| **w == Word::TurnsLeft).count();
        assert_eq!(n_left, 3); // one original turns left, two from around
    }

    #[test]
    fn rewrites_are_idempotent() {
        for seed in 0..5 {
            let stories =
                generate_simple(Dialect::FourDir, 2..=6, DepthPolicy::Simple, 10, seed).unwrap();
            for s in &stories {
                let once = apply_rewrites(&parse_story(s), s.dialect);
                let twice = apply_rewrites(&once, s.dialect);
                assert_eq!(once, twice);
            }
        }
    }

    #[test]
    fn rewrites_preserve_oracle_labels() {
        for seed in 0..4 {
            for dialect in [Dialect::TwoDir, Dialect::FourDir] {
                let stories =
                    generate_simple(dialect, 2..=7, DepthPolicy::Simple, 25, seed).unwrap();
                for s in &stories {
                    let d = apply_rewrites(&parse_story(s), dialect);
                    let dirs = final_directions(&d.to_sentences(), s.width).unwrap();
                    let oracle = evaluate_oracle(s).unwrap();
                    assert_eq!(dirs, oracle.final_directions, "story {}", s.id);
                }
            }
        }
    }

    #[test]
    fn validate_flags_duplicate_state() {
        let mut d = init_only_diagram();
        d.layers.insert(1, Generator::state(Word::Person, 0));
        assert!(d.validate().contains(&Violation::DuplicateState(0)));
    }

    #[test]
    fn validate_flags_arity_mismatch() {
        let mut d = init_only_diagram();
        d.layers.pop();
        d.layers.push(Generator { kind: GeneratorKind::Effect(Word::SameDir), wires: vec![0, 1, 1] });
        let v = d.validate();
        assert!(v.iter().any(|x| matches!(x, Violation::ArityMismatch(..))));
    }

    #[test]
    fn validate_ok_on_generated_stories() {
        let story = example_three_actor_story();
        let mut bad = parse_story(&story);
        assert!(bad.validate().is_empty());
        bad.layers.retain(|g| g.kind != GeneratorKind::Discard);
        assert!(bad.validate().contains(&Violation::MissingDiscard(2)));
    }

    #[test]
    fn diagram_serialises_to_json() {
        let d = parse_story(&example_three_actor_story());
        let text = serde_json::to_string(&d).unwrap();
        let back: TextDiagram = serde_json::from_str(&text).unwrap();
        assert_eq!(d, back);
        assert!(d.dump().contains("L000"));
    }
}
