/** Evaluator-facing copy. Edit freely; nothing here is load-bearing. */

export const INSTRUCTIONS = `Listen to all three clips (A, B, C). They are
presentations of the same song section by different performances. Decide
whether you hear a clearly discernible quality gradient across the three:
one clearly strongest, one clearly weakest. Optionally rank them from
strongest to weakest. You must listen to each clip for at least three
seconds before you can submit.`;
