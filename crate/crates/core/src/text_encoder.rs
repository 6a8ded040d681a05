//! Caption vocabulary and the recurrent text encoder.
//!
//! Captions are embedded word by word and run through a GRU; the last valid
//! hidden state is projected to the encoded-text length. Padded positions of
//! a batch leave the hidden state untouched.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use t2v_autograd::nn::{Embedding, Linear};
use t2v_autograd::{Float, ParamStore, Tape, Tensor, Var};

use crate::config::ModelConfig;
use crate::error::{invalid, io_err, Error, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

/// Lowercased alphanumeric words; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|w| w.trim_matches('\'').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Token to id mapping. Ids 0 and 1 are reserved for padding and unknown
/// words; the rest are assigned by descending corpus frequency, ties broken
/// lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn build<S: AsRef<str>>(corpus: &[S]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(invalid("cannot build a vocabulary from an empty corpus"));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for line in corpus {
            for tok in tokenize(line.as_ref()) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, _)| t != PAD_TOKEN && t != UNK_TOKEN)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(ranked.into_iter().map(|(t, _)| t));
        Ok(Self::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Tokenizes `text`; unknown words map to the unknown id.
    pub fn caption(&self, text: &str) -> Result<Caption> {
        let tokens: Vec<usize> = tokenize(text)
            .iter()
            .map(|t| self.id(t).unwrap_or(UNK_ID))
            .collect();
        Caption::new(tokens, text, self.len())
    }

    /// `<token>\t<id>\n` lines sorted by id.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(w, "{t}\t{i}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R, path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            what: "vocabulary",
            path: path.to_path_buf(),
            reason,
        };
        let mut tokens = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(io_err(format!("reading {}", path.display())))?;
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| bad(format!("line {} has no tab", lineno + 1)))?;
            let id: usize = id
                .parse()
                .map_err(|_| bad(format!("line {}: bad id {id:?}", lineno + 1)))?;
            if id != tokens.len() {
                return Err(bad(format!("line {}: ids must be dense and sorted", lineno + 1)));
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < 2 || tokens[PAD_ID] != PAD_TOKEN || tokens[UNK_ID] != UNK_TOKEN {
            return Err(bad("missing reserved tokens".into()));
        }
        Ok(Self::from_tokens(tokens))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(io_err(format!("creating {}", path.display())))?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w)
            .and_then(|_| w.flush())
            .map_err(io_err(format!("writing {}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(io_err(format!("opening {}", path.display())))?;
        Self::read(std::io::BufReader::new(f), path)
    }
}

/// A tokenized caption.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Caption {
    pub tokens: Vec<usize>,
    pub raw_text: String,
}

impl Caption {
    pub fn new(tokens: Vec<usize>, raw_text: impl Into<String>, vocab_size: usize) -> Result<Self> {
        let c = Caption {
            tokens,
            raw_text: raw_text.into(),
        };
        c.validate(vocab_size)?;
        Ok(c)
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(invalid(format!("empty caption {:?}", self.raw_text)));
        }
        if let Some(&bad) = self.tokens.iter().find(|&&t| t >= vocab_size) {
            return Err(invalid(format!(
                "token id {bad} out of vocabulary (size {vocab_size})"
            )));
        }
        Ok(())
    }
}

/// Encoded caption of length `text_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedText {
    pub values: Vec<f32>,
}

/// Word embeddings, a single GRU layer, and a linear projection.
#[derive(Clone, Debug)]
pub struct TextEncoder {
    pub vocab_size: usize,
    pub hidden: usize,
    pub out_dim: usize,
    embedding: Embedding,
    input_gates: Linear,
    hidden_gates: Linear,
    project: Linear,
}

impl TextEncoder {
    pub fn new<T: Float, R: Rng + ?Sized>(
        ps: &mut ParamStore<T>,
        prefix: &str,
        vocab_size: usize,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Self {
        let h = cfg.encoder_hidden;
        TextEncoder {
            vocab_size,
            hidden: h,
            out_dim: cfg.text_dim,
            embedding: Embedding::new(ps, &format!("{prefix}.embedding"), vocab_size, cfg.word_dim, rng),
            input_gates: Linear::new(ps, &format!("{prefix}.gru_input"), cfg.word_dim, 3 * h, rng),
            hidden_gates: Linear::new(ps, &format!("{prefix}.gru_hidden"), h, 3 * h, rng),
            project: Linear::new(ps, &format!("{prefix}.project"), h, cfg.text_dim, rng),
        }
    }

    /// Encodes a batch of captions to `[N, text_dim]`.
    pub fn forward<'t, T: Float>(&self, tape: &'t Tape<T>, captions: &[&Caption]) -> Result<Var<'t, T>> {
        if captions.is_empty() {
            return Err(invalid("empty caption batch"));
        }
        for c in captions {
            c.validate(self.vocab_size)?;
        }
        let n = captions.len();
        let h = self.hidden;
        let max_len = captions.iter().map(|c| c.tokens.len()).max().unwrap_or(0);
        let mut state = tape.constant(Tensor::zeros(&[n, h]));
        for step in 0..max_len {
            let ids: Vec<usize> = captions
                .iter()
                .map(|c| c.tokens.get(step).copied().unwrap_or(PAD_ID))
                .collect();
            let x = self.embedding.forward(tape, &ids);
            let gx = self.input_gates.forward(x);
            let gh = self.hidden_gates.forward(state);
            let z = gx.narrow(1, 0, h).add(gh.narrow(1, 0, h)).sigmoid();
            let r = gx.narrow(1, h, h).add(gh.narrow(1, h, h)).sigmoid();
            let cand = gx.narrow(1, 2 * h, h).add(r.mul(gh.narrow(1, 2 * h, h))).tanh();
            let next = cand.add(z.mul(state.sub(cand)));
            let valid: Vec<T> = captions
                .iter()
                .map(|c| if step < c.tokens.len() { T::ONE } else { T::ZERO })
                .collect();
            state = if valid.iter().all(|&v| v == T::ONE) {
                next
            } else {
                let mask = tape.constant(Tensor::from_vec(&[n, 1], valid));
                state.add(next.sub(state).mul_bcast(mask))
            };
        }
        Ok(self.project.forward(state))
    }

    /// Encodes one caption in evaluation mode.
    pub fn encode(&self, ps: &ParamStore<f32>, caption: &Caption) -> Result<EncodedText> {
        let tape = Tape::inference(ps);
        let v = self.forward(&tape, &[caption])?;
        let values = v.value().data().to_vec();
        debug_assert!(values.iter().all(|x| x.is_finite()));
        Ok(EncodedText { values })
    }
}
