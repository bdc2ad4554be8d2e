#pragma once

// Corpus loading and the global label space. Input CSV layout is one row
// per sample: (class_index, title, description), class_index 1-based per
// dataset, quoted fields allowed.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "drill/tokenizer.hpp"

namespace drill {

struct Sample {
    std::vector<std::int32_t> tokens;  // hashed, truncated
    int global_label = -1;
    std::string source_dataset;  // empty once emitted on the stream
};

// Maps each dataset's local 1-based class index onto a disjoint block of the
// global label space. Yelp and Amazon share one 5-class sentiment block. The
// block layout is fixed regardless of task ordering, so a global label means
// the same thing in every run.
class LabelMap {
public:
    struct Block {
        int offset = 0;
        int count = 0;
    };

    static LabelMap paper_benchmark() {
        // [Sentiment(5), AGNews(4), Yahoo(10), DBPedia(14)] -> C = 33
        LabelMap m;
        m.add_block("yelp", 0, 5);
        m.add_block("amazon", 0, 5);
        m.add_block("agnews", 5, 4);
        m.add_block("yahoo", 9, 10);
        m.add_block("dbpedia", 19, 14);
        m.total_ = 33;
        return m;
    }

    static LabelMap synthetic(std::size_t num_tasks, std::size_t classes_per_task) {
        LabelMap m;
        int offset = 0;
        for (std::size_t t = 0; t < num_tasks; ++t) {
            m.add_block("task" + std::to_string(t), offset, static_cast<int>(classes_per_task));
            offset += static_cast<int>(classes_per_task);
        }
        m.total_ = offset;
        return m;
    }

    void add_block(const std::string& dataset, int offset, int count) {
        blocks_[dataset] = Block{offset, count};
        if (offset + count > total_) total_ = offset + count;
    }

    int num_classes() const { return total_; }

    const Block& block(const std::string& dataset) const {
        auto it = blocks_.find(dataset);
        if (it == blocks_.end())
            throw std::invalid_argument("unknown dataset '" + dataset + "'");
        return it->second;
    }

    bool has(const std::string& dataset) const { return blocks_.count(dataset) > 0; }

    int global_label(const std::string& dataset, int class_index_1based) const {
        const Block& b = block(dataset);
        if (class_index_1based < 1 || class_index_1based > b.count)
            throw std::out_of_range("class index " + std::to_string(class_index_1based) +
                                    " out of range for dataset '" + dataset + "' (1.." +
                                    std::to_string(b.count) + ")");
        return b.offset + class_index_1based - 1;
    }

    const std::map<std::string, Block>& blocks() const { return blocks_; }

private:
    std::map<std::string, Block> blocks_;
    int total_ = 0;
};

// Table-driven task orderings. Order I..IV are the four permutations used by
// the benchmark; position k of the returned sequence is the dataset trained
// at task position k.
inline std::vector<std::string> ordering_for(char order_id) {
    switch (order_id) {
        case '1':
        case 'I':
            return {"yelp", "agnews", "dbpedia", "amazon", "yahoo"};
        case '2':
            return {"dbpedia", "yahoo", "agnews", "amazon", "yelp"};
        case '3':
            return {"yelp", "yahoo", "amazon", "dbpedia", "agnews"};
        case '4':
            return {"agnews", "yelp", "amazon", "yahoo", "dbpedia"};
        default:
            throw std::invalid_argument(std::string("unknown order id '") + order_id +
                                        "' (expected 1..4)");
    }
}

inline char parse_order_id(const std::string& s) {
    if (s == "I" || s == "1" || s == "i") return '1';
    if (s == "II" || s == "2" || s == "ii") return '2';
    if (s == "III" || s == "3" || s == "iii") return '3';
    if (s == "IV" || s == "4" || s == "iv") return '4';
    throw std::invalid_argument("unknown order id '" + s + "' (expected I..IV)");
}

inline std::string order_name(char order_id) {
    switch (order_id) {
        case '1': return "I";
        case '2': return "II";
        case '3': return "III";
        case '4': return "IV";
        default: throw std::invalid_argument("unknown order id");
    }
}

// Applies an order permutation to a non-paper dataset list. Slots follow the
// order-I sequence, i.e. canonical[0] plays yelp's positions, canonical[1]
// agnews', and so on. Only 5-dataset lists can be permuted.
inline std::vector<std::string> apply_ordering(char order_id,
                                               const std::vector<std::string>& canonical) {
    std::vector<std::string> paper = ordering_for(order_id);
    std::vector<std::string> order1 = ordering_for('1');
    if (canonical.size() != paper.size()) {
        if (order_id == '1') return canonical;
        throw std::invalid_argument("orders II..IV are defined for exactly 5 datasets");
    }
    std::map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < order1.size(); ++i) slot[order1[i]] = i;
    std::vector<std::string> out;
    out.reserve(canonical.size());
    for (const auto& ds : paper) out.push_back(canonical[slot[ds]]);
    return out;
}

// --- CSV ---------------------------------------------------------------

// RFC-4180-style rows: fields separated by commas, optional double-quote
// quoting with "" escapes. Returns false at EOF.
inline bool read_csv_row(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    int c = in.get();
    if (c == EOF) return false;
    std::string field;
    bool quoted = false;
    while (true) {
        if (c == EOF) {
            fields.push_back(field);
            return true;
        }
        char ch = static_cast<char>(c);
        if (quoted) {
            if (ch == '"') {
                int next = in.peek();
                if (next == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"' && field.empty()) {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(field);
            field.clear();
        } else if (ch == '\n') {
            fields.push_back(field);
            return true;
        } else if (ch != '\r') {
            field.push_back(ch);
        }
        c = in.get();
    }
}

inline std::string csv_escape(const std::string& s) {
    bool needs = s.find_first_of(",\"\n\r") != std::string::npos;
    if (!needs) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

struct CsvRow {
    int class_index = 0;  // 1-based per dataset
    std::string title;
    std::string description;
};

inline void write_corpus_csv(std::ostream& out, const std::vector<CsvRow>& rows) {
    for (const auto& r : rows)
        out << r.class_index << ',' << csv_escape(r.title) << ',' << csv_escape(r.description)
            << '\n';
}

// Parses one corpus file into Samples; text = title ++ description, hashed
// and truncated by the tokenizer, class index remapped to the global space.
inline std::vector<Sample> load_corpus(const std::string& path, const std::string& dataset_id,
                                       const LabelMap& label_map,
                                       const HashingTokenizer& tokenizer) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file '" + path + "'");
    std::vector<Sample> samples;
    std::vector<std::string> fields;
    std::size_t row = 0;
    while (read_csv_row(in, fields)) {
        ++row;
        if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
        if (fields.size() != 3)
            throw std::runtime_error(path + ": malformed row " + std::to_string(row) +
                                     " (expected 3 fields, got " + std::to_string(fields.size()) +
                                     ")");
        int cls = 0;
        try {
            std::size_t pos = 0;
            cls = std::stoi(fields[0], &pos);
            if (pos != fields[0].size()) throw std::invalid_argument(fields[0]);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ": malformed row " + std::to_string(row) +
                                     " (bad class index '" + fields[0] + "')");
        }
        int global;
        try {
            global = label_map.global_label(dataset_id, cls);
        } catch (const std::out_of_range& e) {
            throw std::runtime_error(path + ": row " + std::to_string(row) + ": " + e.what());
        }
        Sample s;
        s.tokens = tokenizer.tokenize(fields[1] + " " + fields[2]);
        s.global_label = global;
        s.source_dataset = dataset_id;
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace drill
