use proptest::prelude::*;

use spantag::analytics::{span_length_distribution, CategoryMap, Grouping, LengthUnit, OFFICIAL_TECHNIQUES};
use spantag::context::build_tc_dataset;
use spantag::encoder::{combine, SeqVector, VectorRole};
use spantag::models::{softmax, train_si, train_tc, TaggedSentence};
use spantag::scorer::score_si;
use spantag::tagcodec::tag_article;
use spantag::tokenizer::{snap_span, tokenize};
use spantag::{
    Article, CharSpan, CombinationStrategy, ContextConfig, ContextKind, SpanAnnotation, TaggingScheme,
    TrainConfig,
};

fn disjoint_spans() -> impl Strategy<Value = Vec<(String, CharSpan)>> {
    prop::collection::vec((0usize..3, 1usize..8, 1usize..6), 0..8).prop_map(|items| {
        let mut cursor = [0usize; 3];
        items
            .into_iter()
            .map(|(article, gap, len)| {
                let begin = cursor[article] + gap;
                cursor[article] = begin + len;
                (article.to_string(), CharSpan { begin, end: begin + len })
            })
            .collect()
    })
}

fn toy_article(id: &str) -> (Article, Vec<SpanAnnotation>) {
    let text = "A quiet headline\nThe shameful traitors met the council.\nResidents asked about roads and vile lies.\n";
    let article = Article::new(id, text);
    let spans = [(21, 38), (88, 97)];
    let anns = spans
        .iter()
        .enumerate()
        .map(|(i, &(b, e))| {
            let technique = if i == 0 { "Name_Calling,Labeling" } else { "Loaded_Language" };
            SpanAnnotation::tc(id, technique, CharSpan { begin: b, end: e })
        })
        .collect();
    (article, anns)
}

proptest! {
    #[test]
    fn every_token_snaps_to_itself(text in "[a-zA-Z0-9 ,.!?'()-]{0,60}", offset in 0usize..20) {
        let tokens = tokenize(&text, offset);
        for (i, t) in tokens.iter().enumerate() {
            prop_assert_eq!(snap_span(t.span, &tokens), i..i + 1);
        }
    }

    #[test]
    fn self_comparison_is_perfect(spans in disjoint_spans()) {
        let anns: Vec<SpanAnnotation> = spans.iter().map(|(id, s)| SpanAnnotation::si(id.as_str(), *s)).collect();
        prop_assert_eq!(score_si(&anns, &anns).unwrap().f1, 1.0);
    }

    #[test]
    fn weighted_average_endpoints_are_exact(
        pairs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..16),
    ) {
        let (s, c): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let s = SeqVector::new(VectorRole::Sequence, s);
        let c = SeqVector::new(VectorRole::Context, c);
        let one = combine(&s, &c, &CombinationStrategy::WeightedAvg { alpha: 1.0 }, None).unwrap();
        let zero = combine(&s, &c, &CombinationStrategy::WeightedAvg { alpha: 0.0 }, None).unwrap();
        prop_assert_eq!(&one.values, &s.values);
        prop_assert_eq!(&zero.values, &c.values);
        let concat = combine(&s, &c, &CombinationStrategy::ConcatEmbed, None).unwrap();
        prop_assert_eq!(concat.dim(), s.dim() + c.dim());
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..10)) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histograms_account_for_every_span(
        spans in prop::collection::vec((0usize..14, 0usize..50, 1usize..120), 1..40),
        width in 1usize..15,
    ) {
        let text = "w ".repeat(100);
        let article = Article::new("1", text);
        let anns: Vec<SpanAnnotation> = spans
            .iter()
            .map(|&(t, b, len)| SpanAnnotation::tc("1", OFFICIAL_TECHNIQUES[t], CharSpan { begin: b, end: (b + len).min(200) }))
            .collect();
        for grouping in [Grouping::All, Grouping::Technique, Grouping::Category] {
            for unit in [LengthUnit::Chars, LengthUnit::Words] {
                let hs = span_length_distribution(&anns, std::slice::from_ref(&article), unit, grouping, width).unwrap();
                prop_assert_eq!(hs.iter().map(|h| h.count).sum::<usize>(), anns.len());
                prop_assert_eq!(hs.iter().flat_map(|h| h.bins.values()).sum::<usize>(), anns.len());
            }
        }
    }
}

#[test]
fn category_map_partitions_official_inventory() {
    let map = CategoryMap::for_techniques(OFFICIAL_TECHNIQUES.iter().copied());
    assert_eq!(map.sizes(), (7, 7));
    assert!(OFFICIAL_TECHNIQUES.iter().all(|t| map.get(t).is_some()));
}

#[test]
fn one_pair_per_annotation() {
    let (article, anns) = toy_article("9");
    for kind in [ContextKind::Sentence, ContextKind::Title, ContextKind::None] {
        let pairs = build_tc_dataset(std::slice::from_ref(&article), &anns, kind, &ContextConfig::default()).unwrap();
        assert_eq!(pairs.len(), anns.len());
    }
}

#[test]
fn training_is_seed_deterministic() {
    let (article, anns) = toy_article("9");
    let spans: Vec<CharSpan> = anns.iter().map(|a| a.span).collect();
    let sentences: Vec<TaggedSentence> = tag_article(&article, &spans, TaggingScheme::Bioes)
        .into_iter()
        .map(|(s, tags)| TaggedSentence { tokens: s.tokens, tags })
        .collect();
    let config = TrainConfig { epochs: 3, seed: 5, ..TrainConfig::default() };
    let a = train_si(&sentences, TaggingScheme::Bioes, &config).unwrap();
    let b = train_si(&sentences, TaggingScheme::Bioes, &config).unwrap();
    assert_eq!(a.to_text(), b.to_text());

    let pairs = build_tc_dataset(std::slice::from_ref(&article), &anns, ContextKind::Sentence, &ContextConfig::default()).unwrap();
    let strategy = CombinationStrategy::ConcatEmbedHidden { hidden_dim: 4 };
    let a = train_tc(&pairs, strategy, true, &config).unwrap();
    let b = train_tc(&pairs, strategy, true, &config).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    let c = train_tc(&pairs, strategy, true, &TrainConfig { seed: 6, ..config }).unwrap();
    assert_ne!(a.to_text(), c.to_text());
}
