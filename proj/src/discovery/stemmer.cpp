#include "prefx/discovery/stemmer.hpp"

#include <array>
#include <cctype>
#include <sstream>

namespace prefx::discovery {

namespace {

class Stemmer {
public:
    explicit Stemmer(std::string_view w) : b_(w) {}

    std::string run() {
        if (b_.size() <= 2) return b_;
        step1ab();
        step1c();
        step2();
        step3();
        step4();
        step5();
        return b_;
    }

private:
    // Working end: the stem under test is b_[0, j_].
    std::string b_;
    std::size_t j_ = 0;

    bool cons(std::size_t i) const {
        switch (b_[i]) {
            case 'a': case 'e': case 'i': case 'o': case 'u': return false;
            case 'y': return i == 0 ? true : !cons(i - 1);
            default: return true;
        }
    }

    /// Number of VC sequences in b_[0, j_].
    int m() const {
        int n = 0;
        std::size_t i = 0;
        const std::size_t end = j_ + 1;
        while (i < end && cons(i)) ++i;
        while (i < end) {
            while (i < end && !cons(i)) ++i;
            if (i >= end) break;
            while (i < end && cons(i)) ++i;
            ++n;
        }
        return n;
    }

    bool vowel_in_stem() const {
        for (std::size_t i = 0; i <= j_; ++i)
            if (!cons(i)) return true;
        return false;
    }

    bool double_cons(std::size_t i) const { return i >= 1 && b_[i] == b_[i - 1] && cons(i); }

    /// consonant-vowel-consonant ending at i, last not w, x or y.
    bool cvc(std::size_t i) const {
        if (i < 2 || !cons(i) || cons(i - 1) || !cons(i - 2)) return false;
        const char c = b_[i];
        return c != 'w' && c != 'x' && c != 'y';
    }

    bool ends(std::string_view s) {
        if (s.size() > b_.size() || b_.compare(b_.size() - s.size(), s.size(), s) != 0) return false;
        if (b_.size() == s.size()) return false;  // keep at least one letter of stem
        j_ = b_.size() - s.size() - 1;
        return true;
    }

    void set_to(std::string_view s) { b_ = b_.substr(0, j_ + 1) + std::string(s); }
    void replace_if_m(std::string_view s) {
        if (m() > 0) set_to(s);
    }

    void step1ab() {
        if (b_.back() == 's') {
            if (ends("sses")) b_.resize(b_.size() - 2);
            else if (ends("ies")) set_to("i");
            else if (b_.size() >= 2 && b_[b_.size() - 2] != 's') b_.pop_back();
        }
        if (ends("eed")) {
            if (m() > 0) b_.pop_back();
        } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
            b_.resize(j_ + 1);
            if (ends("at")) set_to("ate");
            else if (ends("bl")) set_to("ble");
            else if (ends("iz")) set_to("ize");
            else if (double_cons(b_.size() - 1)) {
                const char c = b_.back();
                if (c != 'l' && c != 's' && c != 'z') b_.pop_back();
            } else {
                j_ = b_.size() - 1;
                if (m() == 1 && cvc(b_.size() - 1)) b_ += 'e';
            }
        }
    }

    void step1c() {
        if (ends("y") && vowel_in_stem()) b_.back() = 'i';
    }

    void step2() {
        static constexpr std::array<std::pair<std::string_view, std::string_view>, 20> rules{{
            {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"}, {"izer", "ize"},
            {"bli", "ble"},     {"alli", "al"},     {"entli", "ent"}, {"eli", "e"},     {"ousli", "ous"},
            {"ization", "ize"}, {"ation", "ate"},   {"ator", "ate"},  {"alism", "al"},  {"iveness", "ive"},
            {"fulness", "ful"}, {"ousness", "ous"}, {"aliti", "al"},  {"iviti", "ive"}, {"biliti", "ble"},
        }};
        for (const auto& [suffix, repl] : rules)
            if (ends(suffix)) {
                replace_if_m(repl);
                return;
            }
        if (ends("logi")) replace_if_m("log");
    }

    void step3() {
        static constexpr std::array<std::pair<std::string_view, std::string_view>, 7> rules{{
            {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"}, {"ical", "ic"}, {"ful", ""}, {"ness", ""},
        }};
        for (const auto& [suffix, repl] : rules)
            if (ends(suffix)) {
                replace_if_m(repl);
                return;
            }
    }

    void step4() {
        static constexpr std::array<std::string_view, 19> suffixes{
            "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement", "ment",
            "ent", "ion", "ou", "ism", "ate", "iti", "ous", "ive", "ize"};
        for (auto suffix : suffixes) {
            if (!ends(suffix)) continue;
            if (suffix == "ion" && !(b_[j_] == 's' || b_[j_] == 't')) return;
            if (m() > 1) b_.resize(j_ + 1);
            return;
        }
    }

    void step5() {
        j_ = b_.size() - 1;
        if (b_.back() == 'e') {
            j_ = b_.size() - 2;
            const int a = m();
            if (a > 1 || (a == 1 && !cvc(b_.size() - 2))) b_.pop_back();
        }
        j_ = b_.size() - 1;
        if (b_.back() == 'l' && double_cons(b_.size() - 1) && m() > 1) b_.pop_back();
    }
};

}  // namespace

std::string porter_stem(std::string_view word) { return Stemmer(word).run(); }

std::set<std::string> name_stems(std::string_view name) {
    std::string cleaned;
    for (char c : name) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) cleaned += static_cast<char>(std::tolower(u));
        else if (std::isspace(u)) cleaned += ' ';
    }
    std::set<std::string> stems;
    std::istringstream words(cleaned);
    for (std::string w; words >> w;) {
        if (w == "of" || w == "to" || w == "the" || w == "and") continue;
        stems.insert(porter_stem(w));
    }
    return stems;
}

}  // namespace prefx::discovery
