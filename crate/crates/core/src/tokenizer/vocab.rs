use super::text::TextTokenizer;
use super::TokenizerError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Special {
    Bos,
    Eos,
    ImgStart,
    ImgEnd,
    Sep,
    Pad,
}

impl Special {
    pub const ALL: [Special; 6] = [Special::Bos, Special::Eos, Special::ImgStart, Special::ImgEnd, Special::Sep, Special::Pad];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Text,
    Visual,
    Special(Special),
}

/// One id space: text ids `[0, T)`, visual ids `[T, T + N)`, then the six
/// special tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnifiedVocab {
    text: TextTokenizer,
    n_visual: usize,
}

impl UnifiedVocab {
    pub fn new(text: TextTokenizer, n_visual: usize) -> Self {
        Self { text, n_visual }
    }

    pub fn text(&self) -> &TextTokenizer {
        &self.text
    }

    pub fn n_text(&self) -> usize {
        self.text.len()
    }

    pub fn n_visual(&self) -> usize {
        self.n_visual
    }

    pub fn size(&self) -> usize {
        self.n_text() + self.n_visual + Special::ALL.len()
    }

    pub fn visual_offset(&self) -> u32 {
        self.n_text() as u32
    }

    pub fn visual_id(&self, code: usize) -> u32 {
        debug_assert!(code < self.n_visual);
        (self.n_text() + code) as u32
    }

    pub fn visual_code(&self, id: u32) -> Result<usize, TokenizerError> {
        match self.kind(id) {
            Some(TokenKind::Visual) => Ok(id as usize - self.n_text()),
            _ => Err(TokenizerError::BadTokenId(id)),
        }
    }

    pub fn special(&self, s: Special) -> u32 {
        let pos = Special::ALL.iter().position(|&x| x == s).unwrap();
        (self.n_text() + self.n_visual + pos) as u32
    }

    pub fn bos(&self) -> u32 {
        self.special(Special::Bos)
    }

    pub fn eos(&self) -> u32 {
        self.special(Special::Eos)
    }

    pub fn kind(&self, id: u32) -> Option<TokenKind> {
        let id = id as usize;
        let (t, v) = (self.n_text(), self.n_visual);
        if id < t {
            Some(TokenKind::Text)
        } else if id < t + v {
            Some(TokenKind::Visual)
        } else {
            Special::ALL.get(id - t - v).map(|&s| TokenKind::Special(s))
        }
    }

    pub fn visual_ids(&self) -> std::ops::Range<u32> {
        self.visual_offset()..self.visual_offset() + self.n_visual as u32
    }

    pub fn text_ids(&self) -> std::ops::Range<u32> {
        0..self.n_text() as u32
    }

    /// Token ids a text target may contain: every text id plus EOS.
    pub fn text_support(&self) -> Vec<u32> {
        self.text_ids().chain([self.eos()]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_are_disjoint_and_cover() {
        let v = UnifiedVocab::new(TextTokenizer::new(["a", "b", "c"]), 5);
        assert_eq!(v.size(), 4 + 5 + 6);
        let mut counts = [0; 3];
        for id in 0..v.size() as u32 {
            match v.kind(id).unwrap() {
                TokenKind::Text => counts[0] += 1,
                TokenKind::Visual => counts[1] += 1,
                TokenKind::Special(_) => counts[2] += 1,
            }
        }
        assert_eq!(counts, [4, 5, 6]);
        assert_eq!(v.kind(v.size() as u32), None);
        assert_eq!(v.visual_code(v.visual_id(3)).unwrap(), 3);
        assert!(v.visual_code(0).is_err());
        assert_eq!(v.eos(), 10);
    }
}
