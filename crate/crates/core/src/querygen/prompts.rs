//! Query-generation prompt templates, one per query type.
//!
//! `[context_str]` is replaced by the Q&A context and `[K]` by the number of
//! queries requested. The text of each template is fixed; changing it changes
//! what is sent to the model, so tests pin the definitions.

use serde::{Deserialize, Serialize};

use super::QueryType;
use crate::corpus::QAPair;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptLanguage {
    #[default]
    English,
    Chinese,
}

const EN_PREAMBLE: &str = "The following are frequent Q&A about Taiwan's patent service platform, which is used by the public for inquiries and reference in the preparation of various applications:\n\n[context_str]\n\n";

const EN_CONCEPT: &str = "Your task is to generate [K] concept search queries that still correspond to the original answer, following the method used in the original question. The definition of concept seeking query: an abstract question that requires multiple sentences to answer";
const EN_FACT: &str = "Your task is to generate [K] fact seeking queries that still correspond to the original answer, following the method used in the original question. The definition of fact seeking query: Queries that have a single, unambiguous answer.";
const EN_KEYWORD: &str = "Your task is to generate [K] keyword queries that still correspond to the original answer, following the method used in the original question. The definition of keyword query: Short queries containing only key identifier words.";
const EN_MISSPELLED: &str = "Your task is to generate [K] queries with spelling mistakes that still correspond to the original answer, following the method used in the original question. The definition of query with spelling mistakes: Queries containing misspellings, transpositions, and common spelling errors.";
const EN_WEB: &str = "Your task is to generate [K] web search-like queries that still correspond to the original answer, following the method used in the original question. The definition of web search-like query: Similar to short queries commonly entered into search engines.";

const ZH_PREAMBLE: &str = "下面是有关台湾便民眾查詢及各項申請準備參考使用的專利服務平台平日諮詢之常見問答：\n\n[context_str]\n\n";

const ZH_CONCEPT: &str = "你的任務是仿照原題目的問法，生成 [K] 個依舊能夠對應原答案的概念尋求查詢的題目。概念尋求查詢的定义：需要多個句子來回答的抽象問題。";
const ZH_FACT: &str = "你的任務是仿照原題目的問法，生成 [K] 個依舊能夠對應原答案的事實尋求查詢的題目。事實尋求查詢的定義：具有單一、明確答案的查詢。";
const ZH_KEYWORD: &str = "你的任務是仿照原題目的問法，生成 [K] 個依舊能夠對應原答案的關鍵字查詢的題目。關鍵字查詢的定義：僅包含關鍵標識符詞的簡短查詢。";
const ZH_MISSPELLED: &str = "你的任務是仿照原題目的問法，生成 [K] 個依舊能夠對應原答案的拼寫錯誤查詢的題目。拼寫錯誤查詢的定義：包含拼寫錯誤、換位和常見拼寫錯誤的查詢。";
const ZH_WEB: &str = "你的任務是仿照原題目的問法，生成 [K] 個依舊能夠對應原答案的網頁搜索查詢的題目。網頁搜索查詢的定義：類似於通常輸入搜索引擎的簡短查詢轉換。";

/// Unrendered template for a type, placeholders intact.
pub fn template(language: PromptLanguage, query_type: QueryType) -> String {
    let (preamble, task) = match language {
        PromptLanguage::English => (
            EN_PREAMBLE,
            match query_type {
                QueryType::ConceptSeeking => EN_CONCEPT,
                QueryType::FactSeeking => EN_FACT,
                QueryType::Keyword => EN_KEYWORD,
                QueryType::Misspelled => EN_MISSPELLED,
                QueryType::WebSearch => EN_WEB,
            },
        ),
        PromptLanguage::Chinese => (
            ZH_PREAMBLE,
            match query_type {
                QueryType::ConceptSeeking => ZH_CONCEPT,
                QueryType::FactSeeking => ZH_FACT,
                QueryType::Keyword => ZH_KEYWORD,
                QueryType::Misspelled => ZH_MISSPELLED,
                QueryType::WebSearch => ZH_WEB,
            },
        ),
    };
    format!("{preamble}{task}")
}

/// The Q&A context block substituted for `[context_str]`.
pub fn context_block(qa: &QAPair) -> String {
    format!("Q: {}\nA: {}", qa.question, qa.answer)
}

pub fn render_prompt(query_type: QueryType, qa: &QAPair, k_per_type: usize) -> String {
    render_prompt_in(PromptLanguage::English, query_type, qa, k_per_type)
}

pub fn render_prompt_in(
    language: PromptLanguage,
    query_type: QueryType,
    qa: &QAPair,
    k_per_type: usize,
) -> String {
    // K first: the context may itself contain the literal "[K]".
    template(language, query_type)
        .replace("[K]", &k_per_type.to_string())
        .replace("[context_str]", &context_block(qa))
}
