#include "papillon/prompts.hpp"

namespace papillon::prompts {

namespace {

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

}  // namespace

PromptTemplate quality_judge_template() {
    PromptTemplate tmpl;
    tmpl.marker_style = MarkerStyle::plain_header;
    tmpl.objective =
        "You are comparing the quality of two responses, given a user query. Is response A at "
        "least as good as response B? Respond with yes or no.";
    tmpl.fields = {
        {"User Query", "The user's request to be fulfilled.", FieldDirection::input},
        {"Response A", "${response_A}", FieldDirection::input},
        {"Response B", "${response_B}", FieldDirection::input},
        {"Reasoning", "Let's think step by step in order to ${reasoning}", FieldDirection::output},
        {"Output", "${output}", FieldDirection::output},
    };
    return tmpl;
}

PromptTemplate leakage_judge_template() {
    PromptTemplate tmpl;
    tmpl.marker_style = MarkerStyle::plain_header;
    tmpl.objective =
        "Determine whether a piece of information is present in the prompt given. Respond with "
        "yes or no.";
    tmpl.fields = {
        {"Information Piece",
         "The piece of information that we wish to check. If this piece of information is a "
         "celebrity name, respond with no.",
         FieldDirection::input},
        {"Prompt", "${prompt}", FieldDirection::input},
        {"Output", "${output}", FieldDirection::output},
    };
    return tmpl;
}

PromptTemplate well_formedness_judge_template() {
    PromptTemplate tmpl;
    tmpl.marker_style = MarkerStyle::plain_header;
    tmpl.objective =
        "Determine whether a piece of text is a valid prompt for a language model. Respond with "
        "yes or no.";
    tmpl.fields = {
        {"Prompt Input", "${prompt_input}", FieldDirection::input},
        {"Reasoning", "Let's think step by step in order to ${reasoning}", FieldDirection::output},
        {"Output", "${output}", FieldDirection::output},
    };
    return tmpl;
}

PromptTemplate creator_seed_template() {
    PromptTemplate tmpl;
    tmpl.marker_style = MarkerStyle::triple_bracket;
    tmpl.objective =
        "You are a helpful assistant that is very mindful of user privacy. You have access to a "
        "powerful large language model that you can query. Given a user request, create a prompt "
        "for your large language model that preserves user privacy, so that this model can help "
        "you complete the user request. Provide the prompt directly without any preamble. DO NOT "
        "COMPLETE THE USER QUERY, ONLY GENERATE A PROMPT.";
    tmpl.fields = {
        {"userQuery", "The user's request to be fulfilled.", FieldDirection::input},
        {"rationale", "${reasoning}", FieldDirection::output},
        {"createdPrompt", "", FieldDirection::output},
    };
    return tmpl;
}

PromptTemplate aggregator_seed_template() {
    PromptTemplate tmpl;
    tmpl.marker_style = MarkerStyle::triple_bracket;
    tmpl.objective = "You are a helpful assistant. Respond to queries from the user.";
    tmpl.fields = {
        {"userQuery", "The user's request to be fulfilled.", FieldDirection::input},
        {"modelExampleResponses",
         "You have the following information from a better language model responding to related "
         "query or queries. Complete the user query by referencing this information. Only you "
         "have access to this information.",
         FieldDirection::input},
        {"finalOutput", "", FieldDirection::output},
    };
    return tmpl;
}

std::string redaction_prompt(const std::string& text, const std::string& marker) {
    static const std::string body =
        "Please edit the provided text by removing any personally identifiable information "
        "(PII). This includes names, company names, places of origin, current living locations, "
        "addresses, and social media links. Replace all removed PII with '[REDACTED]'. Ensure "
        "that the rest of the text remains unchanged, word for word. Maintain the original "
        "punctuation, quotation marks, spaces, and line breaks. If the text does not contain any "
        "PII, return it as is.\n"
        "For example, if the input is:\n"
        "Write in a better way - Hi Jacob (PM), Since Hanisha is going on maternity, can you let "
        "me know when the replacement for Hanisha will be required.\n"
        "The output must be:\n"
        "Write in a better way - Hi [REDACTED] (PM), Since [REDACTED] is going on maternity, can "
        "you let me know when the replacement for [REDACTED] will be required.\n"
        "Please repeat this process with the following text:\n";
    std::string prompt = body;
    if (marker != "[REDACTED]") {
        prompt = replace_all(prompt, "[REDACTED]", marker);
    }
    return prompt + text;
}

std::string span_extraction_prompt(const std::string& original, const std::string& redacted) {
    return "Given the original string and the redacted string, what are the contents of the "
           "[REDACTED] segments? Give your answers one line per segment.\n\nORIGINAL: " +
           original + "\n\nREDACTED: " + redacted;
}

std::string context_dependence_prompt(const std::string& query, const std::string& history) {
    return "Given a user query and a conversation history, does the completion of the query "
           "depend on the conversation history? Respond with yes or no.\n\nUSER QUERY: " +
           query + "\n\nCONVERSATION HISTORY: " + history;
}

std::string classification_prompt(const std::string& dialogue) {
    return "You are labeling a conversation between a user and an AI assistant. Classify the "
           "conversation into exactly one of the following context categories:\n\n"
           "1. Job, Visa, & Other Applications\n"
           "2. Financial and Corporate Info\n"
           "3. Quoted Emails and Messages\n"
           "4. Academic and Education Info\n"
           "5. Healthcare and Wellness\n"
           "6. Personal Relationships\n"
           "7. Sexual and Erotic Content\n"
           "8. Fandom and Creative Writing\n"
           "9. Code and Software Development\n"
           "10. Travel and Lifestyle\n"
           "11. Personal Chitchat\n\n"
           "Respond with exactly one category label from the list and nothing else.\n\n"
           "CONVERSATION:\n" +
           dialogue;
}

}  // namespace papillon::prompts
