#include "kattn/visualize.hpp"

#include <algorithm>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "kattn/heads.hpp"

namespace kattn {

AttentionRecord trace_attention(const RelationModel& model, const RawExample& raw,
                                const EncodedExample& encoded) {
  NoGradGuard no_grad;
  const std::size_t index = 0;
  const Batch batch = make_batch(std::span(&encoded, 1), std::span(&index, 1));
  const ModelOutput out = model.forward(batch, ForwardContext{}, false);
  AttentionRecord rec;
  rec.id = raw.id;
  rec.tokens = raw.tokens;
  rec.gold = raw.relation;
  rec.predicted = model.vocab().relations.at(argmax(out.probs.data()));
  for (const ChannelOutput& c : out.channels) {
    const auto w = c.weights.data();
    rec.channels.emplace_back(c.name, std::vector<double>(w.begin(), w.end()));
  }
  return rec;
}

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += ch;
    }
  }
  return out;
}

}  // namespace

std::string render_html(std::span<const AttentionRecord> records) {
  std::string html =
      "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>attention weights</title>\n"
      "<style>body{font-family:sans-serif}table{border-collapse:collapse}"
      "td{padding:4px 8px;vertical-align:top}"
      "span.t{padding:1px 3px;margin:1px;display:inline-block}</style>\n"
      "</head><body>\n<table>\n<tr><th>example</th><th>channel</th><th>tokens</th></tr>\n";
  char buf[96];
  for (const AttentionRecord& r : records) {
    for (const auto& [name, weights] : r.channels) {
      const double top = *std::max_element(weights.begin(), weights.end());
      html += "<tr><td>" + escape(r.id) + "<br>gold: " + escape(r.gold) +
              "<br>pred: " + escape(r.predicted) + "</td><td>" + escape(name) + "</td><td>";
      for (std::size_t i = 0; i < r.tokens.size(); ++i) {
        const double alpha = top > 0.0 ? weights[i] / top : 0.0;
        std::snprintf(buf, sizeof buf,
                      "<span class=\"t\" title=\"%.4f\" style=\"background:rgba(220,40,40,%.3f)\">",
                      weights[i], alpha);
        html += buf + escape(r.tokens[i]) + "</span>";
      }
      html += "</td></tr>\n";
    }
  }
  html += "</table>\n</body></html>\n";
  return html;
}

std::string attention_json(std::span<const AttentionRecord> records) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const AttentionRecord& r : records) {
    nlohmann::ordered_json e;
    e["id"] = r.id;
    e["tokens"] = r.tokens;
    e["gold"] = r.gold;
    e["predicted"] = r.predicted;
    e["channels"] = nlohmann::ordered_json::object();
    for (const auto& [name, weights] : r.channels) e["channels"][name] = weights;
    j.push_back(std::move(e));
  }
  return j.dump(2);
}

}  // namespace kattn
