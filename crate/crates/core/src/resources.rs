//! Per-story derived data shared by pairing and pair features: tokens,
//! document vectors, frame sequences, arc profiles and tags.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::corpus::{HedonometerLexicon, MoralTag, Story};
use crate::frames::FrameSeq;
use crate::shapes::{arc_profile, ArcProfile, ShapeParams};
use crate::textsim::{embed_document_weighted, fit_tfidf, tokenize, EmbeddingProvider, TokenStream};

/// Inputs for [`StoryResources::build`]. Every source is optional.
#[derive(Default)]
pub struct ResourceInputs<'a> {
    /// Word vectors for the TF-IDF-weighted lexical document vector.
    pub words: Option<&'a dyn EmbeddingProvider>,
    /// Document vectors keyed by story id.
    pub documents: Option<&'a dyn EmbeddingProvider>,
    /// Moral vectors keyed by story id. Without it, morals are embedded
    /// like documents from `words`.
    pub morals: Option<&'a dyn EmbeddingProvider>,
    pub frames: Option<&'a [FrameSeq]>,
    pub lexicon: Option<&'a HedonometerLexicon>,
    pub shape_params: ShapeParams,
    pub stoplist: Option<&'a HashSet<String>>,
}

#[derive(Debug, Clone, Default)]
pub struct StoryResources {
    pub ids: Vec<String>,
    pub tokens: HashMap<String, TokenStream>,
    pub lexical: HashMap<String, Vec<f64>>,
    pub semantic: HashMap<String, Vec<f64>>,
    pub moral: HashMap<String, Vec<f64>>,
    pub frames: HashMap<String, FrameSeq>,
    pub profiles: HashMap<String, ArcProfile>,
    pub tags: HashMap<String, BTreeSet<MoralTag>>,
}

impl StoryResources {
    pub fn build(stories: &[Story], inputs: &ResourceInputs<'_>) -> Self {
        let strip = |t: TokenStream| match inputs.stoplist {
            Some(stop) => t.without(stop),
            None => t,
        };
        let mut res = StoryResources {
            ids: stories.iter().map(|s| s.id.clone()).collect(),
            ..Default::default()
        };
        let token_list: Vec<TokenStream> = stories.iter().map(|s| strip(tokenize(&s.text))).collect();

        if let (Some(words), Ok(model)) = (inputs.words, fit_tfidf(&token_list)) {
            for (story, tokens) in stories.iter().zip(&token_list) {
                if let Ok(v) = embed_document_weighted(tokens, words, &model) {
                    res.lexical.insert(story.id.clone(), v);
                }
            }
        }
        if let Some(docs) = inputs.documents {
            for story in stories {
                if let Some(v) = docs.embed(&story.id) {
                    res.semantic.insert(story.id.clone(), v);
                }
            }
        }
        if let Some(morals) = inputs.morals {
            for story in stories.iter().filter(|s| s.has_moral()) {
                if let Some(v) = morals.embed(&story.id) {
                    res.moral.insert(story.id.clone(), v);
                }
            }
        } else if let Some(words) = inputs.words {
            let moral_tokens: Vec<(&Story, TokenStream)> = stories
                .iter()
                .filter(|s| s.has_moral())
                .map(|s| (s, strip(tokenize(s.moral.as_deref().unwrap_or("")))))
                .collect();
            let docs: Vec<TokenStream> = moral_tokens.iter().map(|(_, t)| t.clone()).collect();
            if let Ok(model) = fit_tfidf(&docs) {
                for (story, tokens) in &moral_tokens {
                    if let Ok(v) = embed_document_weighted(tokens, words, &model) {
                        res.moral.insert(story.id.clone(), v);
                    }
                }
            }
        }
        if let Some(frames) = inputs.frames {
            let known: HashSet<&str> = res.ids.iter().map(String::as_str).collect();
            for seq in frames.iter().filter(|f| known.contains(f.story_id.as_str())) {
                res.frames.insert(seq.story_id.clone(), seq.clone());
            }
        }
        if let Some(lexicon) = inputs.lexicon {
            for story in stories {
                if let Ok((profile, _)) = arc_profile(&story.id, &story.text, lexicon, inputs.shape_params) {
                    res.profiles.insert(story.id.clone(), profile);
                }
            }
        }
        for (story, tokens) in stories.iter().zip(token_list) {
            res.tokens.insert(story.id.clone(), tokens);
            res.tags.insert(story.id.clone(), story.tags.clone());
        }
        res
    }

    pub fn contains(&self, id: &str) -> bool {
        self.tokens.contains_key(id)
    }
}
