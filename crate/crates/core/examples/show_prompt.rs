use std::sync::Arc;

use multistep_ast::corpus::{load_corpus, split_at_action, CorpusFormat};
use multistep_ast::predictors::{
    EchoStubClient, InContextPredictor, PromptSpec, RetrievalIndex, HASHED_TFIDF,
};

/// Prints the few-shot prompt for dialogue `<test-index>` of a corpus after
/// `<k>` actions, retrieving from a training corpus.
fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.len() != 5 {
        eprintln!("usage: show_prompt <train.jsonl> <test.jsonl> <test-index> <k>");
        std::process::exit(1);
    }
    let train = load_corpus(&args[1], CorpusFormat::JsonlV1).unwrap();
    let test = load_corpus(&args[2], CorpusFormat::JsonlV1).unwrap();
    let spec = PromptSpec::default();
    let index = RetrievalIndex::build(&train, spec.retrieval_features, HASHED_TFIDF).unwrap();
    let p = InContextPredictor::new(spec, index, Arc::new(EchoStubClient), 7);
    let split = split_at_action(
        &test[args[3].parse::<usize>().unwrap()],
        args[4].parse().unwrap(),
    )
    .unwrap();
    print!("{}", p.prompt_for(&split).unwrap());
}
