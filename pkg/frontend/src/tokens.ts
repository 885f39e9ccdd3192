// Display tokenization mirroring the matcher's normalization, so the token
// ranges selected in the browser line up with the matcher's token spans.

export const POST_BOUNDARY = '␞'

const URL_RE = /(?:https?:\/\/|www\.)\S+/g
const MENTION_RE = /@\w+/g
const TERMINAL_PUNCT_RE = /[.!?]["'”’)\]]*$/
const NON_WORD_RE = /[^\w'-]+/g

export interface DisplayToken {
  text: string
  /** a sentence or post boundary falls immediately after this token */
  boundary: boolean
}

export function tokenize(text: string): DisplayToken[] {
  const cleaned = text
    .toLowerCase()
    .replace(URL_RE, ' ')
    .replace(MENTION_RE, ' ')
    .replace(/#/g, '')
  const tokens: DisplayToken[] = []
  for (const raw of cleaned.split(/\s+/)) {
    if (!raw) continue
    if (raw.includes(POST_BOUNDARY)) {
      const last = tokens[tokens.length - 1]
      if (last) last.boundary = true
      continue
    }
    const endsSentence = TERMINAL_PUNCT_RE.test(raw)
    const word = raw.replace(NON_WORD_RE, '').replace(/^['\-_]+|['\-_]+$/g, '')
    if (word) {
      tokens.push({ text: word, boundary: endsSentence })
    } else if (endsSentence) {
      const last = tokens[tokens.length - 1]
      if (last) last.boundary = true
    }
  }
  return tokens
}

export function tokenTexts(text: string): string[] {
  return tokenize(text).map((t) => t.text)
}
